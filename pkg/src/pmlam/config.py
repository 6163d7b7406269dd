"""Run configuration: defaults, flat key=value config files, validation.

Keys in files and CLI flags use the field names below (``-`` and ``_`` are
interchangeable). ``margin_mode`` is ``adaptive`` or ``fixed:<m>``;
``relations`` is a comma list out of ``ui,uu,ii`` and must contain ``ui``.
"""

from dataclasses import dataclass, field, fields, replace

from .distance import DistanceKind


@dataclass
class RunConfig:
    h: int = 50
    hidden: int = 50
    alpha: float = 0.001
    lam: float = 0.001
    epochs: int = 100
    batch_size: int = 5000
    neg_samples: int = 2
    pool_size: int = 500
    refresh_period: int = 20
    sim_threshold: float = 0.2
    ks: tuple = (5, 10, 15, 20)
    seed: int = 0
    distance_kind: str = "w2"            # "w2" | "euclidean"
    margin_mode: str = "adaptive"        # "adaptive" | "fixed:<m>"
    margin_mode_uu: str | None = None    # per-relation overrides (ablations)
    margin_mode_ii: str | None = None
    relations: tuple = ("ui", "uu", "ii")
    indicator_mode: str = "squared-diff"  # "squared-diff" | "concat" | "sum"
    eval_every: int = 10
    eps_fd: float = 1e-2
    sigma0: float = 0.1
    sigma_jitter: float = 0.1
    mu_std: float = 0.01
    optimizer: str = "adam"              # "adam" | "sgd"
    margin_grad_to_theta: bool = False
    outer_batch: str = "same"            # "same" | "fresh"
    joint_margin_training: bool = False  # anti-pattern switch: phi follows the inner loss
    early_stop_patience: int = 0         # evaluations without R@10 gain; 0 disables
    deterministic: bool = False

    def kind(self):
        return DistanceKind.W2_SQUARED if self.distance_kind == "w2" \
            else DistanceKind.EUCLIDEAN_SQUARED

    def margin_mode_for(self, relation):
        """Parsed margin mode of one relation: "adaptive" or ("fixed", m)."""
        raw = self.margin_mode
        if relation == "uu" and self.margin_mode_uu is not None:
            raw = self.margin_mode_uu
        if relation == "ii" and self.margin_mode_ii is not None:
            raw = self.margin_mode_ii
        return parse_margin_mode(raw)

    def validate(self):
        if self.h < 1 or self.hidden < 1:
            raise ValueError("h and hidden must be >= 1")
        if self.alpha <= 0 or self.lam < 0:
            raise ValueError("alpha must be > 0 and lambda >= 0")
        if self.batch_size < 1 or self.neg_samples < 1:
            raise ValueError("batch_size and neg_samples must be >= 1")
        if self.pool_size < self.neg_samples:
            raise ValueError("pool_size must be >= neg_samples")
        if self.refresh_period < 1 or self.epochs < 0 or self.eval_every < 1:
            raise ValueError("bad epoch bookkeeping values")
        if not 0.0 < self.sim_threshold <= 1.0:
            raise ValueError("sim_threshold must lie in (0, 1]")
        if self.distance_kind not in ("w2", "euclidean"):
            raise ValueError(f"unknown distance_kind {self.distance_kind!r}")
        if self.indicator_mode not in ("squared-diff", "concat", "sum"):
            raise ValueError(f"unknown indicator_mode {self.indicator_mode!r}")
        if self.outer_batch not in ("same", "fresh"):
            raise ValueError(f"unknown outer_batch {self.outer_batch!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if "ui" not in self.relations:
            raise ValueError("relations must contain 'ui'")
        for rel in self.relations:
            if rel not in ("ui", "uu", "ii"):
                raise ValueError(f"unknown relation {rel!r}")
            self.margin_mode_for(rel)
        if self.eps_fd <= 0:
            raise ValueError("eps_fd must be > 0")
        if not 0.0 <= self.sigma_jitter < 1.0:
            raise ValueError("sigma_jitter must lie in [0, 1)")
        return self


def parse_margin_mode(raw):
    if raw == "adaptive":
        return "adaptive"
    if raw == "fixed":
        return ("fixed", 1.0)
    if raw.startswith("fixed:"):
        m = float(raw.split(":", 1)[1])
        if m < 0:
            raise ValueError("fixed margin must be >= 0")
        return ("fixed", m)
    raise ValueError(f"unknown margin mode {raw!r}")


_BOOL_WORDS = {"true": True, "on": True, "yes": True, "1": True,
               "false": False, "off": False, "no": False, "0": False}


def _coerce(name, default, raw):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() not in _BOOL_WORDS:
            raise ValueError(f"{name}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return tuple(int(p) if p.isdigit() else p for p in parts)
    return raw  # strings and optional strings


def load_config_file(path):
    """Parse a flat ``key = value`` file (# comments) into a raw dict."""
    raw = {}
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            raw[key.strip().replace("-", "_")] = value.strip()
    return raw


def make_config(file_values=None, **overrides):
    """RunConfig from optional file values plus keyword overrides (which win)."""
    defaults = RunConfig()
    values = {}
    known = {f.name: getattr(defaults, f.name) for f in fields(RunConfig)}
    for source in (file_values or {},):
        for key, raw in source.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = _coerce(key, known[key], raw) if isinstance(raw, str) else raw
    cfg = replace(defaults, **values)
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()


def echo_lines(cfg):
    """Stable key=value lines for embedding into output artifact headers."""
    out = []
    for f in sorted(fields(RunConfig), key=lambda f: f.name):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(map(str, v))
        out.append(f"{f.name} = {v}")
    return out
