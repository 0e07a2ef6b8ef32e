"""Experiment configuration records and builders for domains, data and sources."""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..barriers import EllipticityPair
from ..errors import ConfigError
from ..geometry import BoundaryGraph, ParabolicDomain
from ..moduli import ModulusSpec, is_dini, DINI
from ..solver import CoefficientField

EXPERIMENTS = ("hopf", "upper_bound", "almost_positivity", "boundary_harnack",
               "dyadic_consistency", "interior_modulus")

DATA_KINDS = ("zero", "xn", "gap", "constant", "heat_kernel")
SOURCE_KINDS = ("zero", "constant", "radial_power")


@dataclass
class ExperimentConfig:
    """Everything one experiment needs.

    ``domain`` is ``{"family": ..., **params}``; a modulus for radial
    profiles is ``{"omega": {"family", "params", "eta0"}}``. ``resolutions``
    are nodes per cylinder radius; every zoom level uses the same count,
    so the spacing at the level measuring ``rho`` is ``rho / (zoom_ratio N)``.
    """

    kind: str
    n: int = 2
    domain: dict = field(default_factory=lambda: {"family": "flat"})
    omega: dict = None               # modulus the domain is checked against
    lam: float = 1.0
    Lam: float = 1.0
    coefficients: list = None        # constant matrix; identity scaled by lam if None
    source: dict = field(default_factory=lambda: {"kind": "zero"})
    data: dict = field(default_factory=lambda: {"kind": "gap"})
    rho_min: float = 2.0 ** -7
    r_max: float = 2.0 ** -2
    anchor: float = 1.0              # scale r of the theorem's anchor evaluation
    resolutions: list = field(default_factory=lambda: [32, 64])
    steps_per_radius2: float = 0.25  # time steps per level = this * N^2
    zoom_ratio: float = 0.25         # measurement radius over level radius
    C0: float = 2.217
    mu_sweep: list = field(default_factory=lambda: [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0])
    band: float = 2.0                # allowed cross-resolution factor of fitted constants
    holder_exponent: float = 0.5
    levels: list = field(default_factory=lambda: [2, 3, 4, 5])
    samples: int = 1000
    seed: int = 0
    dini_only: bool = False

    def __post_init__(self):
        self.validate()

    # validation -----------------------------------------------------------
    def validate(self):
        if self.kind not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.kind!r}", key="kind")
        if self.n not in (2, 3):
            raise ConfigError("n must be 2 or 3", key="n")
        if not 0 < self.lam <= self.Lam:
            raise ConfigError("need 0 < lam <= Lam", key="lam")
        if not self.resolutions or any(int(N) != N or N < 4 for N in self.resolutions):
            raise ConfigError("resolutions must be integers >= 4", key="resolutions")
        if self.band < 1:
            raise ConfigError("band must be at least 1", key="band")
        for name in ("rho_min", "r_max"):
            v = getattr(self, name)
            if not v > 0 or abs(math.log2(v) - round(math.log2(v))) > 1e-9:
                raise ConfigError(f"{name} must be a positive power of two", key=name)
        if self.rho_min > self.r_max:
            raise ConfigError("rho_min must not exceed r_max", key="rho_min")
        h = self.coarsest_h()
        if self.uses_scales and self.rho_min < 8 * h * (1 - 1e-12):
            raise ConfigError(f"rho_min = {self.rho_min:g} is below 8 h = {8 * h:g} "
                              "(rho_min >= 8 * coarsest h)", key="rho_min")
        if self.data.get("kind") not in DATA_KINDS:
            raise ConfigError(f"unknown data kind {self.data.get('kind')!r}", key="data.kind")
        if self.source.get("kind") not in SOURCE_KINDS:
            raise ConfigError(f"unknown source kind {self.source.get('kind')!r}",
                              key="source.kind")
        try:
            graph = self.graph()
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"invalid domain: {err}", key="domain") from err
        if self.kind == "almost_positivity" and graph.L > 1 / 16 * (1 + 1e-12):
            raise ConfigError(f"Lipschitz constant {graph.L:g} exceeds 1/16", key="domain")
        if self.dini_only:
            om = self.modulus()
            if om is not None and not om.is_zero and is_dini(om) != DINI:
                raise ConfigError("experiment is restricted to Dini moduli but the domain "
                                  "modulus is not Dini", key="omega")

    @property
    def uses_scales(self):
        """Whether the experiment measures on the dyadic range ``[rho_min, r_max]``."""
        return self.kind in ("hopf", "upper_bound", "interior_modulus")

    def coarsest_h(self):
        """Grid spacing at the level that measures ``rho_min`` for the coarsest resolution."""
        N = min(self.resolutions)
        if self.uses_scales:
            return self.rho_min / (self.zoom_ratio * N)
        if self.kind == "dyadic_consistency":
            return 2.0 ** (-max(self.levels) - 1) / N
        return 1.0 / N

    # builders -----------------------------------------------------------
    def modulus(self):
        if self.omega is None:
            om = self.domain.get("omega")
            return ModulusSpec.from_record(om) if isinstance(om, dict) else om
        return ModulusSpec.from_record(self.omega)

    def patch_radius(self):
        if self.kind in ("hopf", "upper_bound"):
            return 2.0 * self.anchor
        return 1.0

    def graph(self):
        d = dict(self.domain)
        fam = d.pop("family")
        if fam == "radial_profile":
            d["omega"] = ModulusSpec.from_record(d["omega"]) if isinstance(d["omega"], dict) \
                else d["omega"]
        return BoundaryGraph(fam, d, n=self.n, R=self.patch_radius())

    def domain_obj(self):
        return ParabolicDomain(self.graph(), self.patch_radius())

    def ellipticity(self):
        return EllipticityPair(self.lam, self.Lam)

    def coefficient_field(self):
        if self.coefficients is None:
            return CoefficientField(self.lam * np.eye(self.n),
                                    ell=self.ellipticity())
        return CoefficientField(np.asarray(self.coefficients, dtype=float),
                                ell=self.ellipticity())

    def source_fn(self):
        s = self.source
        kind = s["kind"]
        if kind == "zero":
            return 0.0
        if kind == "constant":
            return float(s.get("value", 1.0))
        if kind == "radial_power":
            # |x - c|^{-beta}: its source modulus behaves like r^{1 - beta}
            beta = float(s.get("exponent", 0.5))
            amp = float(s.get("value", 1.0))
            c = np.asarray(s.get("center", [0.0] * self.n), dtype=float)

            def f(x, t):
                r = np.linalg.norm(np.asarray(x) - c, axis=-1)
                return amp * np.power(np.maximum(r, 1e-300), -beta)
            return f
        raise ConfigError(f"unknown source kind {kind!r}", key="source.kind")

    def source_sup(self):
        """Sup of ``|f|`` when finite (used to bound the source modulus below the grid)."""
        s = self.source
        if s["kind"] == "zero":
            return 0.0
        if s["kind"] == "constant":
            return abs(float(s.get("value", 1.0)))
        return math.inf

    def data_fn(self, graph=None):
        d = self.data
        kind = d["kind"]
        graph = graph or self.graph()
        scale = float(d.get("value", 1.0))
        if kind == "zero":
            return lambda x, t: np.zeros(np.shape(x)[:-1])
        if kind == "constant":
            return lambda x, t: np.full(np.shape(x)[:-1], scale)
        if kind == "xn":
            return lambda x, t: scale * np.asarray(x)[..., -1]
        if kind == "gap":
            def g(x, t):
                x = np.asarray(x, dtype=float)
                return scale * np.maximum(x[..., -1] - graph(x[..., :-1], t), 0.0)
            return g
        if kind == "heat_kernel":
            s0 = float(d.get("shift", 1.0))

            def g(x, t):
                x = np.asarray(x, dtype=float)
                tt = np.asarray(t, dtype=float) + s0
                return scale * (4 * np.pi * tt) ** (-self.n / 2) * \
                    np.exp(-np.sum(x * x, axis=-1) / (4 * tt))
            return g
        raise ConfigError(f"unknown data kind {kind!r}", key="data.kind")

    def to_record(self):
        rec = asdict(self)
        return {k: v for k, v in rec.items() if v is not None}

    @classmethod
    def from_record(cls, rec):
        return cls(**rec)
