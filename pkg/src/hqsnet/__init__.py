"""Compressed-sensing MRI reconstruction: classical half-quadratic splitting
and an unrolled network trained on the same loss without ground truth."""

from .errors import (
    ConvergenceError,
    DataError,
    DegenerateError,
    DimensionError,
    DomainError,
    FormatError,
    GraphError,
    HqsNetError,
    MissingCheckpointError,
    ShapeError,
)
from .forward import Measurements, dc_update, forward_model, zero_filled
from .hqs import HqsConfig, SolveReport, objective, solve
from .metrics import hfen, psnr, relative_metrics, ssim
from .net import NetConfig, NetParams, TrainConfig, init_net, net_forward, reconstruct, train
from .numerics import dwt2, fft2c, idwt2, ifft2c
from .sampling import Mask, generate_mask, verify_mask

__version__ = "0.1.0"
