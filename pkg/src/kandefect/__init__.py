"""Kolmogorov-Arnold and convolutional defect classifiers on a small numpy autodiff core."""
from .bspline import KnotGrid, adapt_grid, basis_derivative, basis_eval, fit_least_squares, make_uniform_grid, spline_eval
from .data import NEU_CLASSES, DatasetSplit, LabeledImage, generate_synthetic, load_image_folder, stratified_split
from .kan import KANLinear, KanConfig, kan_forward, kan_init, kan_update_grids
from .models import MODEL_NAMES, Model, ModelSpec, build_model, forward_classify, load_checkpoint, param_count
from .tensor import Tape, Tensor
from .train import BenchmarkResult, RunReport, TrainConfig, adam_step, benchmark, evaluate, train_model

__version__ = "0.1.0"
