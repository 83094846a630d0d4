from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..errors import ConfigError
from ..schedule import DEFAULT_AUDIO_SCHEDULE, DEFAULT_VIDEO_SCHEDULE, SCHEDULE_KINDS

INJECT_MODES = ("cmc_pe", "cross_attention", "none")


@dataclass(frozen=True)
class BranchConfig:
    modality: str
    frames: int
    dim: int
    hidden_dim: int = 64
    n_layers: int = 2
    n_inject_sites: int = 4
    heads: int = 4

    def __post_init__(self):
        if self.modality not in ("video", "audio"):
            raise ConfigError(f"modality must be 'video' or 'audio', got {self.modality!r}", field="modality")
        for name in ("frames", "dim", "hidden_dim", "n_layers", "n_inject_sites", "heads"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}", field=name)
        if self.hidden_dim % self.heads:
            raise ConfigError("hidden_dim must be divisible by heads", field="hidden_dim")

    @property
    def latent_shape(self) -> tuple[int, int]:
        return (self.frames, self.dim)


@dataclass(frozen=True)
class ModelConfig:
    video: BranchConfig
    audio: BranchConfig
    inject_mode: str = "cmc_pe"
    connector_dim: int = 64
    connector_context: int = 1
    pool_cross_attention: bool = True
    n_labels: int = 3
    time_embed_dim: int = 32
    schedule_v: dict = field(default_factory=lambda: dict(DEFAULT_VIDEO_SCHEDULE))
    schedule_a: dict = field(default_factory=lambda: dict(DEFAULT_AUDIO_SCHEDULE))
    init_seed: int = 0

    def __post_init__(self):
        if self.inject_mode not in INJECT_MODES:
            raise ConfigError(f"inject_mode must be one of {INJECT_MODES}, got {self.inject_mode!r}", field="inject_mode")
        if self.connector_dim < 1 or self.connector_context < 0 or self.n_labels < 1:
            raise ConfigError("connector_dim, n_labels must be >= 1 and connector_context >= 0", field="connector_dim")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ConfigError("time_embed_dim must be a positive even integer", field="time_embed_dim")
        for name in ("schedule_v", "schedule_a"):
            sch = getattr(self, name)
            if set(sch) != {"kind", "T_max", "beta_start", "beta_end"} or sch["kind"] not in SCHEDULE_KINDS:
                raise ConfigError(f"{name} needs kind/T_max/beta_start/beta_end", field=name)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["video"] = BranchConfig(**d["video"])
        d["audio"] = BranchConfig(**d["audio"])
        return cls(**d)


def toy_config(inject_mode: str = "cmc_pe", frames: int = 16, video_dim: int = 8, audio_frames: int = 64,
               audio_dim: int = 4, hidden_dim: int = 64, n_layers: int = 2, n_inject_sites: int = 4,
               init_seed: int = 0, **kw) -> ModelConfig:
    return ModelConfig(
        video=BranchConfig("video", frames, video_dim, hidden_dim, n_layers, n_inject_sites),
        audio=BranchConfig("audio", audio_frames, audio_dim, hidden_dim, n_layers, n_inject_sites),
        inject_mode=inject_mode,
        connector_dim=hidden_dim,
        init_seed=init_seed,
        **kw,
    )
