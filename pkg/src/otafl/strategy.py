"""Strategy descriptors: the two CDPB variants, their mixture, and baselines."""

from dataclasses import dataclass

from .errors import ConfigError

CDPB_KINDS = ("noisy", "idle", "mixed")
BASELINE_KINDS = ("gamma_based", "h_min", "is_based", "noise_free")


@dataclass(frozen=True)
class StrategySpec:
    """Which unreliable-client behavior (and power-balance rule) is active.

    ``portion`` is the Bernoulli probability that an unreliable client sends
    noise (mixed only). ``base`` picks the CDPB variant a baseline borrows for
    its unreliable clients and closed forms.
    """

    kind: str
    portion: float = None
    base: str = "idle"

    def __post_init__(self):
        if self.kind not in CDPB_KINDS + BASELINE_KINDS:
            raise ConfigError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "mixed":
            if self.portion is None or not 0 <= self.portion <= 1:
                raise ConfigError("mixed strategy requires portion in [0, 1]")
        elif self.portion is not None:
            raise ConfigError(f"portion is only valid for mixed, got kind={self.kind!r}")
        if self.base not in ("noisy", "idle"):
            raise ConfigError(f"base must be 'noisy' or 'idle', got {self.base!r}")

    @classmethod
    def parse(cls, text):
        """Parse 'noisy', 'idle', 'mixed:<portion>', or 'baseline:<name>[:<base>]'."""
        parts = text.strip().split(":")
        if parts[0] in ("noisy", "idle") and len(parts) == 1:
            return cls(kind=parts[0])
        if parts[0] == "mixed" and len(parts) == 2:
            return cls(kind="mixed", portion=float(parts[1]))
        if parts[0] == "baseline" and len(parts) in (2, 3):
            name = parts[1]
            aliases = {"h_min_based": "h_min", "is": "is_based"}
            name = aliases.get(name, name)
            base = parts[2] if len(parts) == 3 else "idle"
            return cls(kind=name, base=base)
        raise ConfigError(f"cannot parse strategy {text!r}")

    @property
    def is_cdpb(self):
        return self.kind in CDPB_KINDS

    @property
    def is_baseline(self):
        return self.kind in BASELINE_KINDS

    def noise_weight(self):
        """Fraction of unreliable clients that transmit full-power noise."""
        if self.kind == "noisy":
            return 1.0
        if self.kind == "idle":
            return 0.0
        if self.kind == "mixed":
            return self.portion
        if self.kind == "noise_free":
            return 0.0
        return 1.0 if self.base == "noisy" else 0.0

    def label(self):
        if self.kind == "mixed":
            return f"mixed:{self.portion:g}"
        if self.is_baseline:
            return f"baseline:{self.kind}" + ("" if self.base == "idle" else f":{self.base}")
        return self.kind
