"""Shared fixtures: predicate registries and reference barrier trees."""

import numpy as np
import pytest

from stlcbf.barrier import GammaFn, build_bf_tree
from stlcbf.formulas import parse_formula
from stlcbf.predicates import ball2


@pytest.fixture
def disc_registry():
    """Three planar discs: a large stay-in region and two goal regions."""
    return {
        "p11": ball2("p11", center=[0.0, 0.0], radius=5.0, dim=2),
        "p211": ball2("p211", center=[3.0, 3.0], radius=2.0, dim=2),
        "p212": ball2("p212", center=[-3.0, 3.0], radius=2.0, dim=2),
    }


@pytest.fixture
def conj_disj_formula(disc_registry):
    """Always over one disc conjoined with eventually over a disjunction."""
    return parse_formula("G[0,15](p11) & F[5,20](p211 | p212)", disc_registry)


@pytest.fixture
def conj_disj_gammas():
    # always funnel: nonpositive across [0,15]; eventually funnel: crosses
    # zero at 18 - 18*sqrt(1/46) ~ 15.346, inside [5,20]
    return [
        GammaFn(gamma_zero=0.0, gamma_inf=-0.5, t_star=15.0, shape="affine"),
        GammaFn(gamma_zero=45.0, gamma_inf=-1.0, t_star=18.0, shape="smooth_clamp"),
    ]


@pytest.fixture
def conj_disj_tree(conj_disj_formula, conj_disj_gammas):
    return build_bf_tree(conj_disj_formula, conj_disj_gammas)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
