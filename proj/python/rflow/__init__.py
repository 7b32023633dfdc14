"""Rectified-flow numerical lab: Python bindings over the C++ core."""

import json as _json

from . import _rflow
from ._rflow import (
    Architecture,
    ConfigError,
    Distribution,
    FormatError,
    NumericError,
    RflowError,
    VelocityNet,
    draw_coupled,
    euler_sample,
    gradient_check,
    load_checkpoint,
    loss_and_gradient,
    lower_bound,
    one_step_sample,
    posterior_velocity,
    save_checkpoint,
    vstar_gaussian,
    w2,
)

__version__ = _rflow.__version__


def train(net, x0, x1, t, **config):
    """Trains `net` on the triples; keyword arguments are training settings (steps, eta, ...).

    Returns (net, initial_loss, final_loss, per-step minibatch losses).
    """
    config.setdefault("steps", 1000)
    return _rflow.train(net, x0, x1, t, _json.dumps(config))


def evaluate_bounds(**inputs):
    """Evaluates every bound formula; keyword arguments override the default inputs."""
    return _json.loads(_rflow.evaluate_bounds(_json.dumps(inputs)))


def normalize_config(config):
    """Returns the full, validated experiment config for a partial one."""
    return _json.loads(_rflow.normalize_config(_json.dumps(config)))


def train_model(config, seed):
    return _rflow.train_model(_json.dumps(config), seed)


def run_sweep(config, jobs=1):
    """Runs a sample-size sweep; returns (csv_text, rate_fit dict)."""
    csv, fit = _rflow.run_sweep(_json.dumps(config), jobs)
    return csv, _json.loads(fit)
