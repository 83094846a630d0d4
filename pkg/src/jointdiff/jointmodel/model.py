"""The two-branch joint denoiser."""
from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError
from ..numerics import Rng, Tensor
from ..numerics.nn import Module
from ..schedule import schedule_from_dict
from .blocks import Branch, Connector, sinusoidal
from .config import ModelConfig


class JointModel(Module):
    """Video and audio denoisers coupled through connectors and injection blocks.

    Label index ``n_labels`` is the null label used for guidance.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.schedule_v = schedule_from_dict(config.schedule_v)
        self.schedule_a = schedule_from_dict(config.schedule_a)
        rng = Rng(config.init_seed)
        cv, ca = config.video, config.audio
        self.video = Branch(cv, config.inject_mode, config.connector_dim, config.n_labels,
                            config.time_embed_dim, rng.child(1), pool=config.pool_cross_attention)
        self.audio = Branch(ca, config.inject_mode, config.connector_dim, config.n_labels,
                            config.time_embed_dim, rng.child(2), pool=config.pool_cross_attention)
        if config.inject_mode == "none":
            self.connector_v = self.connector_a = None
        else:
            self.connector_v = Connector(cv.dim, config.connector_dim, config.connector_context, rng.child(3))
            self.connector_a = Connector(ca.dim, config.connector_dim, config.connector_context, rng.child(4))

    @property
    def null_label(self) -> int:
        return self.config.n_labels

    def core_parameter_names(self) -> set[str]:
        """Parameters of the branch backbones (everything except connectors and inject blocks)."""
        return {n for n in self.named_parameters() if not (n.startswith("connector_") or ".inject." in n)}

    def added_parameter_names(self) -> set[str]:
        return set(self.named_parameters()) - self.core_parameter_names()

    def time_features(self, t_v, t_a) -> np.ndarray:
        e = self.config.time_embed_dim
        fv = sinusoidal(np.asarray(t_v) / self.schedule_v.T_max, e)
        fa = sinusoidal(np.asarray(t_a) / self.schedule_a.T_max, e)
        return np.concatenate([fv, fa], axis=1)

    def _check(self, x_v, x_a, t_v, t_a, labels):
        cv, ca = self.config.video, self.config.audio
        if tuple(x_v.shape[1:]) != cv.latent_shape or tuple(x_a.shape[1:]) != ca.latent_shape:
            raise DimensionError(f"latent shapes {x_v.shape}, {x_a.shape} do not match {cv.latent_shape}, {ca.latent_shape}")
        if x_v.shape[0] != x_a.shape[0]:
            raise DimensionError("video and audio batch sizes differ")
        b = x_v.shape[0]
        t_v = np.broadcast_to(np.asarray(t_v, dtype=np.int64), (b,))
        t_a = np.broadcast_to(np.asarray(t_a, dtype=np.int64), (b,))
        labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), (b,))
        if np.any(t_v < 0) or np.any(t_v > self.schedule_v.T_max):
            raise ContractError(f"video timestep outside [0, {self.schedule_v.T_max}]")
        if np.any(t_a < 0) or np.any(t_a > self.schedule_a.T_max):
            raise ContractError(f"audio timestep outside [0, {self.schedule_a.T_max}]")
        if np.any(labels < 0) or np.any(labels > self.null_label):
            raise ContractError(f"label outside [0, {self.null_label}]")
        return t_v, t_a, labels

    def predict_noise(self, x_v, x_a, t_v, t_a, labels, self_cond=None) -> tuple[Tensor, Tensor]:
        """Noise predictions for a batch of noisy pairs.

        ``x_v`` is [B, F, D_v], ``x_a`` is [B, tau, D_a]; timesteps and labels
        are scalars or length-B arrays. ``self_cond`` is an optional pair of
        clean-data estimates (zeros when absent).
        """
        x_v = x_v if isinstance(x_v, Tensor) else Tensor(np.asarray(x_v, dtype=np.float32))
        x_a = x_a if isinstance(x_a, Tensor) else Tensor(np.asarray(x_a, dtype=np.float32))
        t_v, t_a, labels = self._check(x_v, x_a, t_v, t_a, labels)
        if self_cond is None:
            sc_v = Tensor(np.zeros(x_v.shape, dtype=x_v.dtype))
            sc_a = Tensor(np.zeros(x_a.shape, dtype=x_a.dtype))
        else:
            sc_v, sc_a = (s if isinstance(s, Tensor) else Tensor(np.asarray(s, dtype=x_v.dtype)) for s in self_cond)
        tf = self.time_features(t_v, t_a)
        if self.connector_v is None:
            cond_for_v = cond_for_a = None
        else:
            cond_for_v = self.connector_a(x_a, sc_a)
            cond_for_a = self.connector_v(x_v, sc_v)
        eps_v = self.video(x_v, sc_v, tf, labels, cond_for_v)
        eps_a = self.audio(x_a, sc_a, tf, labels, cond_for_a)
        return eps_v, eps_a


def joint_predict_noise(model, x_v, x_a, t_v, t_a, label, self_cond=None):
    return model.predict_noise(x_v, x_a, t_v, t_a, label, self_cond)
