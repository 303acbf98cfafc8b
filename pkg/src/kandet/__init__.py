"""Real vs AI-generated image classification on semantic image embeddings.

Two classifiers over precomputed 512-dim embeddings — a hybrid KAN-MLP
(spline feature transform) and a baseline MLP — with training, evaluation
metrics, dataset tooling, and a CLI.  All numerics are built from first
principles and every gradient is finite-difference checked.
"""

from .dataset import EmbeddingRecord, load_bin, load_jsonl, summarize, synthetic_gaussians, write_bin, write_jsonl
from .metrics import auc_rank_oracle, confusion, per_class_report, precision_recall_f1, roc_curve
from .models import BaselineMlp, HybridKanMlp, load_params, parameter_count, predict_label, save_params
from .numerics import SeededRng, finite_difference_gradient, matmul
from .spline import SplineGrid, basis_at, basis_matrix, build_grid
from .training import TrainConfig, TrainReport, adam_step, bce_loss, fit, nll_softmax_loss

__version__ = "0.1.0"
