"""The compiled engine must reproduce the Python engine bit for bit."""

import numpy as np
import pytest

from trafficdfa import graph, traffic


@pytest.mark.parametrize("strategy", ["liu", "echenique", "zhang"])
@pytest.mark.parametrize(
    "lam,beta",
    [
        (0.05, 0.1),    # fractional rates on both sides
        (1.0, 0.0),     # integer creation, unit capacity
        (0.0, 0.2),     # empty system
        (0.12, 0.02),   # congested
    ],
)
def test_engines_bit_identical(strategy, lam, beta, small_net):
    cfg = traffic.SimConfig(
        strategy=strategy, lam=lam, beta=beta, steps=250, warmup=0,
        n_nodes=small_net.node_count, seed=17,
    )
    py = traffic.run_detailed(cfg, net=small_net, sim_seed=555, engine="python")
    co = traffic.run_detailed(cfg, net=small_net, sim_seed=555, engine="compiled")
    assert np.array_equal(py.series.values, co.series.values)
    assert np.array_equal(py.inflow, co.inflow)
    assert py.created_total == co.created_total
    assert py.delivered_total == co.delivered_total


def test_paper_scale_spot_check():
    net = graph.generate_scale_free(300, 3, seed=4)
    cfg = traffic.SimConfig(
        strategy="echenique", lam=0.01, beta=0.05, steps=400, warmup=100,
        n_nodes=300, seed=2,
    )
    py = traffic.run_detailed(cfg, net=net, engine="python")
    co = traffic.run_detailed(cfg, net=net, engine="compiled")
    assert np.array_equal(py.series.values, co.series.values)


def test_unknown_engine_rejected(small_net):
    cfg = traffic.SimConfig(steps=10, warmup=0, n_nodes=small_net.node_count)
    with pytest.raises(ValueError):
        traffic.run_detailed(cfg, net=small_net, engine="fortran")
