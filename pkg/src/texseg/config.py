"""Run configuration: one flat dataclass covering every stage's parameters.

Configs resolve in precedence order: profile defaults, then a key=value
config file, then command-line overrides.  The effective config can be
emitted back out as text; emit -> load -> apply reproduces every value
exactly (floats round-trip via repr).  Zero values for mask_sigma and
admm_mu0 mean "derive the default" (side/4 and 1e-2*gamma respectively).
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import UsageError

PROFILES = ("prague", "histology")


@dataclass
class RunConfig:
    # stage 1: patch sampling and filter learning
    filter_side: int = 9
    filters: int = 41  # feature channel count; includes the mean filter when k_includes_mean
    k_includes_mean: bool = True
    patches: int = 50000
    mu: float = 2000.0
    nu: float = 2000.0
    coherence_weight: float = 10.0
    centroid_weight: float = 10.0
    grad_tol: float = 1e-5
    max_learn_iters: int = 1000
    mask_sigma: float = 0.0  # 0 -> filter_side / 4
    grayscale: bool = False
    # stage 2: features and Potts segmentation
    gamma: float = 0.03
    epsilon_scale: float = 1e-8
    extract_tol: float = 1e-6
    min_area_fraction: float = 1e-3
    admm_mu0: float = 0.0  # 0 -> 1e-2 * gamma
    admm_exponent: float = 2.01
    admm_max_outer: int = 250
    admm_agree_tol: float = 1e-3
    # evaluation and reproducibility
    metric_threshold: float = 0.75
    seed: int = 0
    threads: int = 0  # 0 -> leave the kernel backend's default

    def validate(self):
        if self.filter_side < 2:
            raise UsageError("filter_side must be >= 2")
        if self.filters < 1:
            raise UsageError("filters must be >= 1")
        if self.k_includes_mean and self.filters < 1:
            raise UsageError("filters must count the mean filter when k_includes_mean")
        if self.patches < 1:
            raise UsageError("patches must be >= 1")
        for name in ("mu", "nu", "grad_tol", "gamma", "epsilon_scale"):
            if getattr(self, name) <= 0:
                raise UsageError(f"{name} must be positive")
        for name in (
            "coherence_weight",
            "centroid_weight",
            "mask_sigma",
            "extract_tol",
            "admm_mu0",
            "admm_agree_tol",
        ):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be >= 0")
        if not 0 <= self.min_area_fraction < 1:
            raise UsageError("min_area_fraction must lie in [0, 1)")
        if self.admm_exponent <= 1:
            raise UsageError("admm_exponent must exceed 1")
        if self.admm_max_outer < 1 or self.max_learn_iters < 0:
            raise UsageError("iteration caps must be positive")
        if not 0.5 < self.metric_threshold <= 1.0:
            raise UsageError("metric_threshold must lie in (0.5, 1]")
        if self.threads < 0:
            raise UsageError("threads must be >= 0")
        return self

    @property
    def k_learn(self):
        return self.filters - 1 if self.k_includes_mean else self.filters

    def resolved_mask_sigma(self):
        return self.mask_sigma if self.mask_sigma > 0 else self.filter_side / 4.0

    def resolved_admm_mu0(self):
        return self.admm_mu0 if self.admm_mu0 > 0 else None


def default_config(profile="prague"):
    if profile == "prague":
        return RunConfig()
    if profile == "histology":
        return RunConfig(filter_side=5, filters=13, gamma=0.8, grayscale=True)
    raise UsageError(f"unknown profile {profile!r} (choose from {', '.join(PROFILES)})")


def _coerce(name, default, raw):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config key {name}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise UsageError(f"config key {name}: could not parse {raw!r}") from None
    return raw


def parse_config_text(text):
    """Flat key=value lines; blank lines and # comments ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise UsageError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = body.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def apply_overrides(cfg, mapping):
    """New RunConfig with string overrides coerced to each field's type."""
    known = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    updates = {}
    for key, raw in mapping.items():
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, known[key], raw)
    return replace(cfg, **updates)


def emit_config(cfg):
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def write_sidecar(output_path, cfg):
    """Echo the effective config next to an output file for provenance."""
    sidecar = f"{output_path}.config.txt"
    with open(sidecar, "w") as fh:
        fh.write(emit_config(cfg))
    return sidecar
