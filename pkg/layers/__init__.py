# Layer package initialization
from layers.module import CostRecorder, Module, init_weight
from layers.core import ClassEmbedding, Conv2d, Linear
from layers.normalization import BN_EPS, BatchNorm2d, CondBatchNorm2d, cond_batchnorm
from layers.spectral import SpectralNormState, spectral_normalize
from layers.attention import SelfAttention, self_attention
from layers.projection import ProjectionHead, projection_logit

__all__ = [
    "CostRecorder",
    "Module",
    "init_weight",
    "ClassEmbedding",
    "Conv2d",
    "Linear",
    "BN_EPS",
    "BatchNorm2d",
    "CondBatchNorm2d",
    "cond_batchnorm",
    "SpectralNormState",
    "spectral_normalize",
    "SelfAttention",
    "self_attention",
    "ProjectionHead",
    "projection_logit",
]
