from __future__ import annotations

from dataclasses import asdict, dataclass

from ..kvtext import ConfigError

VARIANTS = ("factorized_encoder", "factorized_self_attention", "baseline_stacked")
VARIANT_ALIASES = {
    "fe": "factorized_encoder",
    "fsa": "factorized_self_attention",
    "baseline": "baseline_stacked",
}


def canonical_variant(name: str) -> str:
    v = VARIANT_ALIASES.get(name, name)
    if v not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; expected one of {VARIANTS} or {tuple(VARIANT_ALIASES)}")
    return v


@dataclass(frozen=True)
class ModelConfig:
    """Architecture dimensions.  Defaults are the published full-size model;
    see :meth:`tiny` for the desk-scale one."""

    d: int = 256
    h: int = 16
    d_z: int = 32
    L: int = 16
    L_t: int = 16
    n_max: int = 5
    ffn_mult: int = 4
    variant: str = "factorized_encoder"

    def __post_init__(self):
        object.__setattr__(self, "variant", canonical_variant(self.variant))
        for k in ("d", "h", "d_z", "L", "L_t", "n_max", "ffn_mult"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{k} must be positive")
        if self.d % 32:
            raise ConfigError(f"d={self.d} must be divisible by 32")
        if self.d % (2 * self.h):
            raise ConfigError(f"d={self.d} must be divisible by 2*h={2 * self.h}")

    @property
    def d_c(self) -> int:
        return self.d // 32

    @property
    def h_s(self) -> int:
        return self.d // 4

    @property
    def d_e(self) -> int:
        return 2 * self.d

    @property
    def d_k(self) -> int:
        return self.d // self.h

    @property
    def temporal_head_dim(self) -> int:
        return self.d // (2 * self.h)

    @classmethod
    def tiny(cls, **kw) -> "ModelConfig":
        """Desk-scale config for smoke runs and the 64-puzzle overfit check.

        ``d_z=1`` keeps the token-transform head small; with noisy targets
        and RMSprop at lr 1e-3 a wider head makes the late training MAE
        jitter well above the converged level.
        """
        base = dict(d=32, h=2, d_z=1, L=1, L_t=1, n_max=3)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(d_c=self.d_c, h_s=self.h_s, d_e=self.d_e, d_k=self.d_k,
                   temporal_head_dim=self.temporal_head_dim)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        from ..kvtext import coerce_fields
        derived = {"d_c", "h_s", "d_e", "d_k", "temporal_head_dim"}
        kw = coerce_fields(cls, {k: v for k, v in raw.items() if k not in derived})
        cfg = cls(**kw)
        for k in derived & raw.keys():
            if int(raw[k]) != getattr(cfg, k):
                raise ConfigError(f"{k}={raw[k]} inconsistent with d={cfg.d}, h={cfg.h}")
        return cfg
