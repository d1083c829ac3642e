"""Dense correspondence by jointly training a feature projector and a 4D cost
aggregator on confidence-masked contrastive pseudo labels."""

from .aggregation import Conv4dKernel, aggregate, aggregate_backward
from .consistency import (ConfidenceMask, ConsistencyParams, FlowField, consistency_mask,
                          mask_and_flows, wta_flow)
from .cost_volume import CostVolume, correlate, correlate_backward, transpose
from .evaluation import PckResult, endpoint_error, pck, warp
from .features import (FeatureMap, ImageGrid, LinearProjector, extract_features,
                       extract_features_backward, l2_normalize)
from .geometry import OUT_OF_GRID, Displacement, GridShape, apply_displacement
from .loss import ABLATION_ROWS, LossParams, LossReport, ablation_loss, ccl_term, joint_loss
from .optim import AdamW, adamw_step
from .pipeline import Model
from .trainer import TrainConfig, train

__version__ = "0.1.0"
