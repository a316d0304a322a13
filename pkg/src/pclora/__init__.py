"""PC-LoRA: progressively compress frozen linear layers into low-rank adapters."""

from .accounting import ArchSpec, CompressionReport, compression_report, count_macs, count_params, preset_arch, rank_sweep
from .layers import AdapterLinear, Linear, PCLoRALinear, export_adapter, trainable_parameters, wrap
from .losses import FeaturePair, LossBreakdown, feat_kd_loss, total_loss
from .models import MLP, MLPSpec, TinyTransformer, TinyTransformerSpec, build_model, export_adapters, wrap_model
from .schedule import DecaySpec, curve, lambda_at, validate
from .trainer import TrainConfig, ablation_grid, evaluate, run, train_step, train_teacher

__version__ = "0.1.0"
