"""Chance-constrained receding-horizon control toolkit.

Offline design (constraint tightening, terminal sets, tube-gain tuning) and
a seeded closed-loop Monte-Carlo simulator for linear systems under bounded
additive disturbances.  Configs, design bundles and reports are plain dicts
with the same schema as the CLI's JSON files; the compute lives in the
C++ extension module.
"""

import json

from smpc._core import (  # noqa: F401  (re-exported errors)
    ConfigError,
    DesignError,
    InvariantViolation,
    NumericalError,
    __version__,
    discard_count,
    lqr_gain,
)
from smpc import _core

__all__ = [
    "ConfigError",
    "DesignError",
    "InvariantViolation",
    "NumericalError",
    "__version__",
    "design",
    "discard_count",
    "lqr_gain",
    "simulate",
    "sweep",
    "tightening_levels",
]


def _as_text(document):
    """Accept a dict or an already-serialized JSON string."""
    if isinstance(document, str):
        return document
    return json.dumps(document)


def design(config):
    """Run the offline stage for every controller in `config`.

    Returns the design bundle as a dict (the CLI's design.json): resolved
    gains, tightening levels, terminal sets and provenance.
    """
    return json.loads(_core.design_json(_as_text(config)))


def simulate(config, bundle=None):
    """Monte-Carlo rollout of every controller on shared disturbance draws.

    Designs in-process when `bundle` is None, otherwise reuses a bundle
    returned by :func:`design` (bit-exact: reports are identical either
    way).  Returns the report as a dict.
    """
    bundle_text = "" if bundle is None else _as_text(bundle)
    return json.loads(_core.simulate_json(_as_text(config), bundle_text))


def sweep(config):
    """Design and simulate one periodic-reset controller per sweep period."""
    return json.loads(_core.sweep_json(_as_text(config)))


def tightening_levels(config, period, steps):
    """Tightening levels of the closed loop under the first controller's gain.

    Returns a dict of numpy arrays (rows x steps): per-step levels `gamma`,
    their saturation bound `gamma_max`, the never-reset accumulation `beta`
    and the periodic accumulation `beta_tilde` (empty when period == 0).
    """
    return _core.tightening_levels(_as_text(config), period, steps)
