"""Run configuration: defaults, YAML round trip and weight/metric spec strings."""

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from library import graph_util, util
from library.features import (
    DEFAULT_COV_WINDOW,
    DEFAULT_PRESMOOTH_SIGMA,
    FeatureError,
    TextureParams,
)
from library.graph_util import GridGeometry, NonlocalParams, WeightGraph
from library.labeling import (
    DEFAULT_ENTROPY_THRESHOLD,
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERATIONS,
    FeatureImage,
    Variant,
)
from library.metric_util import (
    DEFAULT_TAU_PHASE,
    MetricError,
    MetricSpace,
    resolve_group,
)

DEFAULT_ALPHA = "uniform:3"
DEFAULT_METRIC = "euclidean"

# Named local Gaussian windows: (s, sigma).
GAUSSIAN_PRESETS = {
    "orientation": (5, 0.8),
    "tensor": (3, 0.5),
}


class ConfigError(ValueError):
    """Raised for unreadable config files or malformed spec strings."""

    pass


@dataclass
class RunConfig:
    """Settings of one labeling run; every field has a command-line flag."""

    metric: str = DEFAULT_METRIC
    alpha: str = DEFAULT_ALPHA
    rho: str | None = None
    epsilon: float = DEFAULT_EPSILON
    entropy_threshold: float = DEFAULT_ENTROPY_THRESHOLD
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    variant: str = Variant.STANDARD.value
    threads: int = field(default_factory=util.default_threads)
    seed: int = 0
    symmetrize: bool = False
    grid: list[int] | None = None
    input: str | None = None
    priors: str | None = None
    initial: str | None = None
    mask: str | None = None
    output: str | None = None
    dump_assignment: str | None = None
    presmooth_sigma: float = DEFAULT_PRESMOOTH_SIGMA
    cov_window: int = DEFAULT_COV_WINDOW

    def __post_init__(self):
        try:
            Variant(self.variant)
        except ValueError as e:
            raise ConfigError(f"unknown variant: {self.variant}") from e
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.entropy_threshold <= 0:
            raise ConfigError(f"entropy_threshold must be > 0, got {self.entropy_threshold}")
        try:
            self.texture_params()
        except FeatureError as e:
            raise ConfigError(str(e)) from e

    @property
    def rho_spec(self) -> str:
        """Filtering weights; the initial-assignment weights unless set."""
        return self.rho or self.alpha

    def texture_params(self) -> TextureParams:
        return TextureParams(self.presmooth_sigma, self.cov_window)

    def as_dict(self) -> dict:
        """Plain builtins, as embedded in run reports."""
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.as_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        logging.info(f"Loaded config: {path}")
        return cls.from_yaml(text)

    def merged(self, **overrides) -> "RunConfig":
        """Copy with every non-None override applied."""
        data = self.as_dict()
        data.update({k: v for k, v in overrides.items() if v is not None and k in data})
        return RunConfig(**data)


def _numbers(parts: list[str], spec: str, types: tuple) -> list:
    if len(parts) != len(types):
        raise ConfigError(f"weight spec {spec!r} needs {len(types)} parameters")
    try:
        return [t(p) for t, p in zip(types, parts)]
    except ValueError as e:
        raise ConfigError(f"weight spec {spec!r}: {e}") from e


def build_weights(
    spec: str,
    geom: GridGeometry,
    image: FeatureImage | None = None,
    space: MetricSpace | None = None,
    threads: int = 1,
) -> WeightGraph:
    """Build a graph from ``uniform:S``, ``gaussian:S:SIGMA``, ``gaussian:PRESET``,
    ``nonlocal[:PRESET]``, ``nonlocal:SP:SNL:T:SIGMA_P:SIGMA_W`` or ``file:PATH``."""
    kind, _, rest = spec.partition(":")
    parts = rest.split(":") if rest else []
    match kind:
        case "uniform":
            (s,) = _numbers(parts, spec, (int,))
            return graph_util.build_local_uniform(geom, s)
        case "gaussian":
            if len(parts) == 1 and parts[0] in GAUSSIAN_PRESETS:
                s, sigma = GAUSSIAN_PRESETS[parts[0]]
            else:
                s, sigma = _numbers(parts, spec, (int, float))
            return graph_util.build_local_gaussian(geom, s, sigma)
        case "nonlocal":
            if image is None or space is None:
                raise ConfigError("nonlocal weights need a feature image")
            if len(parts) <= 1:
                preset = parts[0] if parts else "color"
                if preset not in graph_util.NONLOCAL_PRESETS:
                    raise ConfigError(f"unknown nonlocal preset: {preset}")
                params = graph_util.NONLOCAL_PRESETS[preset]
            else:
                params = NonlocalParams(*_numbers(parts, spec, (int, int, int, float, float)))
            return graph_util.build_nonlocal(image, space, params, threads)
        case "file":
            graph = graph_util.load_graph(rest)
            if graph.n != geom.n:
                raise ConfigError(f"graph file has {graph.n} pixels, grid has {geom.n}")
            return graph
    raise ConfigError(f"unknown weight spec: {spec!r}")


def parse_metric(spec: str) -> MetricSpace:
    """``euclidean``, ``spd``, ``rotation[:GROUP]``, ``multiphase:G1,G2[:TAU]``, ``texture``."""
    kind, _, rest = spec.partition(":")
    try:
        match kind:
            case "euclidean":
                return MetricSpace.euclidean(int(rest) if rest else 0)
            case "spd":
                return MetricSpace.spd(int(rest) if rest else 0)
            case "rotation":
                return MetricSpace.rotation_quotient(resolve_group(rest or "trivial"))
            case "multiphase":
                names, _, tau = rest.partition(":")
                if not names:
                    raise ConfigError("multiphase metric needs a list of groups")
                groups = tuple(resolve_group(g) for g in names.split(","))
                return MetricSpace.multiphase(groups, float(tau) if tau else DEFAULT_TAU_PHASE)
            case "texture":
                return MetricSpace.texture()
    except (MetricError, ValueError) as e:
        raise ConfigError(f"metric spec {spec!r}: {e}") from e
    raise ConfigError(f"unknown metric spec: {spec!r}")
