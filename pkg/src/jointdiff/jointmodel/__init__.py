"""Two-branch joint denoiser with CMC-PE or cross-attention coupling."""
from .blocks import Branch, Connector, InjectBlock, cmc_pe_inject, cross_attn_inject
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import INJECT_MODES, BranchConfig, ModelConfig, toy_config
from .model import JointModel, joint_predict_noise
from .sampling import DEFAULT_GUIDANCE, OracleDenoiser, joint_generate
from .training import TrainOptions, TrainReport, joint_loss, sample_local_timesteps, train


def connector_encode(conn: Connector, x_noisy, x0_self):
    return conn(x_noisy, x0_self)


__all__ = [
    "Branch",
    "BranchConfig",
    "Checkpoint",
    "Connector",
    "DEFAULT_GUIDANCE",
    "INJECT_MODES",
    "InjectBlock",
    "JointModel",
    "ModelConfig",
    "OracleDenoiser",
    "TrainOptions",
    "TrainReport",
    "cmc_pe_inject",
    "connector_encode",
    "cross_attn_inject",
    "joint_generate",
    "joint_loss",
    "joint_predict_noise",
    "load_checkpoint",
    "sample_local_timesteps",
    "save_checkpoint",
    "toy_config",
    "train",
]
