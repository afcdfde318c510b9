import numpy as np
import pytest

from quadnorm_kit.grid import FieldTensor, uniform_grid
from quadnorm_kit.normalize import NormSpec
from quadnorm_kit.opsim import (
    StackSpec,
    build_stack,
    cosine_basis,
    depth_scaling_experiment,
    forward,
    gap_scaling_experiment,
    spectral_mix,
    transfer_discrepancy,
    transfer_ladder,
)
from quadnorm_kit.parallel import threads

# recorded once from build_stack(StackSpec(depth=4, width=16, modes=6, seed=7))
GOLDEN_CHECKSUM = "adeff86289561165"


def test_build_deterministic_and_golden():
    spec = StackSpec(depth=4, width=16, modes=6, seed=7)
    a, b = build_stack(spec), build_stack(spec)
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)
    assert a.checksum() == GOLDEN_CHECKSUM


def test_depth_zero_rejected():
    with pytest.raises(ValueError):
        StackSpec(depth=0)


def test_deeper_stack_shares_leading_blocks():
    a = build_stack(StackSpec(depth=2, seed=3))
    b = build_stack(StackSpec(depth=5, seed=3))
    assert np.array_equal(a.blocks[1].spectral, b.blocks[1].spectral)
    assert np.array_equal(a.proj_w1, b.proj_w1)


def test_spectral_norm_cap():
    s = build_stack(StackSpec(depth=2, width=8, modes=4, seed=1))
    for blk in s.blocks:
        for m in blk.spectral.reshape(-1, 8, 8):
            assert np.linalg.norm(m, 2) <= 0.9 + 1e-12


def test_cosine_basis_mode_limit():
    with pytest.raises(ValueError):
        cosine_basis(uniform_grid([9, 9]), 5)
    assert len(cosine_basis(uniform_grid([9, 9]), 4)) == 2


def test_spectral_mix_recovers_resolved_mode():
    # a single cosine mode is projected to (nearly) itself with identity mixing
    g = uniform_grid([129, 129])
    x, y = g.mesh()
    z = (np.cos(np.pi * x) * np.cos(2 * np.pi * y))[None, None]
    eye = np.zeros((4, 4, 1, 1))
    eye[1, 2, 0, 0] = 1.0
    out = spectral_mix(z, g, eye)
    assert np.max(np.abs(out - z)) < 1e-3


@pytest.mark.parametrize("norm", ["none", "layernorm", "quadnorm", "blendquadnorm", "rmsnorm"])
def test_constant_input_constant_output(norm):
    spec = StackSpec(depth=3, width=8, modes=4, seed=2, norm=NormSpec(norm), coord_channels=False)
    g = uniform_grid([17, 17])
    y = forward(build_stack(spec), FieldTensor(np.full((1, 1, 17, 17), 0.7), g))
    assert np.ptp(y.data) <= 1e-10


def test_zero_input_no_norm_gives_constant_bias_field():
    spec = StackSpec(depth=2, width=8, modes=4, seed=5, norm=NormSpec("none"), coord_channels=False)
    y = forward(build_stack(spec), FieldTensor(np.zeros((1, 1, 9, 9)), uniform_grid([9, 9])))
    assert np.ptp(y.data) <= 1e-12
    assert abs(y.data.mean()) > 0


def test_same_resolution_zero_discrepancy_and_per_layer():
    s = build_stack(StackSpec(depth=3, seed=7))
    g = uniform_grid([33, 33])
    rep = transfer_discrepancy(s, "mixed2d", g, g)
    assert rep.discrepancy == 0.0
    rep2 = transfer_discrepancy(s, "mixed2d", uniform_grid([17, 17]), g)
    assert len(rep2.per_layer) == 3 + 2
    assert np.all(np.isfinite(rep2.per_layer))
    assert abs(rep2.per_layer[-1] - rep2.discrepancy) <= 1e-12


def test_no_norm_transfer_order():
    rep = transfer_ladder(StackSpec(seed=7, norm=NormSpec("none")), "mixed2d", (17, 33, 65))
    assert 1.7 <= rep.fits["none"][0] <= 2.5
    lin = transfer_ladder(StackSpec(seed=7, norm=NormSpec("none"), activation="identity"), "mixed2d", (17, 33, 65))
    assert lin.fits["none"][0] >= 1.7


def test_gap_experiment_properties():
    norms = (NormSpec("layernorm"), NormSpec("quadnorm"))
    rep = gap_scaling_experiment(StackSpec(seed=7), "mixed2d", 17, (17, 33, 65, 129), norms)
    by = {(r["method"], r["r"]): r["discrepancy"] for r in rep.rows}
    assert by[("layernorm", 1)] == 0.0 and by[("quadnorm", 1)] == 0.0
    for r in (4, 8):
        assert by[("quadnorm", r)] <= by[("layernorm", r)]
    for m in ("layernorm", "quadnorm"):
        curve = [d for _, d in sorted(rep.curve(m, "r"))]
        assert all(b >= a for a, b in zip(curve, curve[1:]))
    assert rep.fits["layernorm"][1] / rep.fits["quadnorm"][1] > 1
    with pytest.raises(ValueError):
        gap_scaling_experiment(StackSpec(seed=7), "mixed2d", 17, (40,), norms)


def test_depth_experiment_properties():
    rep = depth_scaling_experiment(
        StackSpec(seed=7), (1, 4, 8), "mixed2d", 17, 65, (NormSpec("none"), NormSpec("layernorm"), NormSpec("quadnorm"))
    )
    by = {(r["method"], r["L"]): r["discrepancy"] for r in rep.rows}
    assert all(np.isfinite(v) for v in by.values())
    assert by[("layernorm", 8)] / by[("quadnorm", 8)] >= by[("layernorm", 4)] / by[("quadnorm", 4)]
    growth = np.log(by[("none", 8)] / by[("none", 4)]) / np.log(2)
    assert growth <= 1.2


def test_thread_count_invariance():
    spec = StackSpec(seed=7, depth=2)
    norms = (NormSpec("layernorm"), NormSpec("quadnorm"))
    with threads(1):
        a = gap_scaling_experiment(spec, "mixed2d", 17, (33, 65), norms).rows
    with threads(4):
        b = gap_scaling_experiment(spec, "mixed2d", 17, (33, 65), norms).rows
    assert a == b
