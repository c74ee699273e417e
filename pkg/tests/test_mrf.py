import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockbg.frame_io import FrameSequence, NodeGrid, tile_blocks
from blockbg.mrf import (EMPTY, BackgroundGrid, GibbsParams, corner_nodes, eligible,
                         estimate_background, fill_background, icm_refine, initialize_partial,
                         label_likelihood, label_prior, node_energy, participating_neighbours,
                         seed_corners, select_label)
from blockbg.repset import NoiseThresholds, Representative, RepresentativeSet, SceneModel

N = 4
PARAMS = GibbsParams()


def smooth_scene(rows, cols, n=N):
    y, x = np.mgrid[0 : rows * n, 0 : cols * n].astype(float)
    return 90 + 3 * x + 2 * y + 12 * np.sin(x / 5.0) * np.cos(y / 7.0)


def clutter(n=N, seed=0):
    """High-contrast striped block that continues nothing around it."""
    x = np.arange(n * n) % n
    return 30.0 + 170.0 * ((x // 1) % 2) + np.random.default_rng(seed).normal(0, 5, n * n)


def model_from(truth, extras=None, bg_weight=50, n=N):
    """Every node holds its true block; ``extras[node]`` prepends (mean, weight) pairs."""
    h, w = truth.shape
    grid = NodeGrid(n, w, h)
    model = SceneModel(grid, NoiseThresholds(t2=2.0))
    blocks = tile_blocks(truth, grid).astype(float)
    extras = extras or {}
    for k in range(grid.node_count):
        node = divmod(k, grid.cols)
        reps = [Representative(mean, 0.0, weight) for mean, weight in extras.get(node, [])]
        reps.append(Representative(blocks[k], 0.0, bg_weight))
        model.set_node(*node, RepresentativeSet(reps))
    return model


def true_labels(model):
    """Index of the last representative (the true block) at every node."""
    return (model.counts - 1).reshape(model.grid.shape)


# -- parameters ---------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(eta=0.5), dict(icm_iterations=-1), dict(w_max_seconds=0),
                                 dict(temperature_divisor=0), dict(truncation="x")])
def test_params_validate(bad):
    with pytest.raises(ValueError):
        GibbsParams(**bad)


# -- stage 2 ------------------------------------------------------------------

def test_initialize_partial_fixes_single_rep_nodes():
    truth = smooth_scene(3, 3)
    model = model_from(truth, {(1, 1): [(clutter(), 10)], (0, 2): [(clutter(), 10)]})
    grid = initialize_partial(model)
    assert grid.labels[1, 1] == EMPTY and grid.labels[0, 2] == EMPTY
    assert grid.empty_count() == 2 and grid.labels[0, 0] == 0


def test_corner_nodes_deduplicate():
    assert corner_nodes((1, 1)) == [(0, 0)]
    assert corner_nodes((2, 3)) == [(0, 0), (0, 2), (1, 0), (1, 2)]


def test_seed_corners_picks_heaviest():
    truth = smooth_scene(3, 3)
    extras = {node: [(clutter(), 10)] for node in np.ndindex(3, 3)}
    extras[(2, 0)] = [(clutter(), 99)]
    grid = seed_corners(model_from(truth, extras), BackgroundGrid(model_from(truth, extras)))
    assert grid.history["seed"] == {"node": [2, 0], "index": 0, "weight": 99}
    assert grid.empty_count() == 8


def test_seed_corner_ties_go_row_major():
    truth = smooth_scene(3, 3)
    model = model_from(truth, {node: [(clutter(), 10)] for node in np.ndindex(3, 3)})
    grid = seed_corners(model, BackgroundGrid(model))
    assert grid.history["seed"]["node"] == [0, 0]
    assert grid.history["seed"]["index"] == 1  # the true block, weight 50


def test_seed_corners_leaves_partial_grid_alone():
    model = model_from(smooth_scene(2, 2), {(0, 0): [(clutter(), 10)]})
    grid = seed_corners(model, initialize_partial(model))
    assert "seed" not in grid.history and grid.empty_count() == 1


# -- eligibility ----------------------------------------------------------------

def test_eligible_full_cliques():
    model = model_from(smooth_scene(3, 3), {(1, 1): [(clutter(), 10)]})
    grid = initialize_partial(model)
    assert eligible(grid, (1, 1)) == ("TL", "TR", "BL", "BR")
    assert participating_neighbours((1, 1), eligible(grid, (1, 1))) == {
        n for n in np.ndindex(3, 3) if n != (1, 1)}


def test_eligible_fallback_pairs():
    model = model_from(smooth_scene(3, 3), {n: [(clutter(), 10)] for n in np.ndindex(3, 3)})
    grid = BackgroundGrid(model)
    grid[(0, 1)] = 1
    assert eligible(grid, (1, 1), allow_fallback=False) == ()
    assert eligible(grid, (1, 1)) == ("up",)
    assert eligible(grid, (2, 2)) == ()


# -- probabilities ------------------------------------------------------------

def test_likelihood_examples():
    np.testing.assert_allclose(label_likelihood([3, 1], PARAMS, 25), [0.75, 0.25])
    np.testing.assert_allclose(label_likelihood([950, 50], PARAMS, 25), [125 / 175, 50 / 175])
    np.testing.assert_allclose(label_likelihood([7], PARAMS, 25), [1.0])


def test_prior_uniform_for_equal_energies():
    np.testing.assert_allclose(label_prior([4.2] * 5, PARAMS), [0.2] * 5)


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1e4), min_size=1, max_size=8), st.floats(1e-3, 1e3))
def test_prior_normalised_and_scale_invariant(energies, scale):
    p = label_prior(energies, PARAMS)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(label_prior(np.array(energies) * scale, PARAMS), p, atol=1e-9)


def test_prior_prefers_low_energy():
    p = label_prior([1.0, 5.0, 3.0], PARAMS)
    assert np.argmax(p) == 0 and p[0] > p[2] > p[1]


@pytest.mark.parametrize("bad", [[], [1.0, np.nan], [np.inf]])
def test_prior_rejects_bad_energies(bad):
    with pytest.raises(ValueError):
        label_prior(bad, PARAMS)


# -- label selection ------------------------------------------------------------

def test_single_candidate_is_taken():
    model = model_from(smooth_scene(2, 2))
    grid = BackgroundGrid(model, np.zeros((2, 2), int))
    grid[(1, 1)] = EMPTY
    index, post = select_label(model, grid, (1, 1), PARAMS)
    assert index == 0 and post.likelihood[0] == pytest.approx(1.0)


def test_smooth_background_beats_heavy_foreground():
    truth = smooth_scene(3, 3)
    model = model_from(truth, {(1, 1): [(clutter(), 300)]}, bg_weight=50)
    grid = initialize_partial(model)
    index, post = select_label(model, grid, (1, 1), PARAMS)
    assert index == 1
    assert post.likelihood[0] > post.likelihood[1]  # the likelihood alone picks the clutter
    assert post.eta_eff == 3 and post.clique_count == 4


def test_posterior_tie_goes_to_heavier():
    truth = smooth_scene(3, 3)
    block = tile_blocks(truth, NodeGrid(N, 3 * N, 3 * N))[4].astype(float)
    model = model_from(truth, {(1, 1): [(block, 200)]}, bg_weight=150)  # both capped at 125
    index, post = select_label(model, initialize_partial(model), (1, 1), PARAMS)
    assert post.log_posterior[0] == post.log_posterior[1]
    assert index == 0
    model = model_from(truth, {(1, 1): [(block, 150)]}, bg_weight=200)
    assert select_label(model, initialize_partial(model), (1, 1), PARAMS)[0] == 1


def test_eta_counts_pair_neighbours():
    model = model_from(smooth_scene(2, 2), {n: [(clutter(), 10)] for n in np.ndindex(2, 2)})
    grid = BackgroundGrid(model)
    grid[(0, 0)] = 1
    _, post = select_label(model, grid, (0, 1), PARAMS)
    assert post.cliques == ("left",) and post.eta_eff == 1


def test_node_energy_is_per_pixel_mean():
    model = model_from(smooth_scene(3, 3), {(1, 1): [(clutter(), 10)]})
    grid = initialize_partial(model)
    energy, count = node_energy(grid, (1, 1), model.means[4, 1])
    assert count == 4 and energy > 0
    clutter_energy, _ = node_energy(grid, (1, 1), model.means[4, 0])
    assert clutter_energy > energy


# -- filling --------------------------------------------------------------------

def test_single_hole_filled_in_one_pass():
    model = model_from(smooth_scene(3, 3), {(1, 1): [(clutter(), 300)]})
    grid = fill_background(model, PARAMS)
    assert grid.labels[1, 1] == 1
    assert grid.history == {"fill_passes": 1, "fallback_passes": 0, "forced_nodes": 0}


def test_wavefront_from_corner_seed():
    truth = smooth_scene(4, 4)
    model = model_from(truth, {n: [(clutter(seed=sum(n)), 10)] for n in np.ndindex(4, 4)})
    grid = fill_background(model, PARAMS)
    assert grid.is_complete()
    np.testing.assert_array_equal(grid.labels, true_labels(model))
    assert grid.history["forced_nodes"] == 0


def test_checkerboard_resolves_in_one_fallback_pass():
    # every 2x2 clique holds two empty nodes, so only a pair-clique pass can start
    truth = smooth_scene(5, 5)
    holes = {n: [(clutter(), 10)] for n in np.ndindex(5, 5) if sum(n) % 2 == 1}
    model = model_from(truth, holes)
    grid = fill_background(model, PARAMS)
    assert grid.history == {"fill_passes": 2, "fallback_passes": 1, "forced_nodes": 0}
    np.testing.assert_array_equal(grid.labels, true_labels(model))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_fill_terminates(rows, cols, seed, density):
    rng = np.random.default_rng(seed)
    truth = smooth_scene(rows, cols)
    extras = {n: [(clutter(seed=int(rng.integers(1000))), int(rng.integers(1, 400)))]
              for n in np.ndindex(rows, cols) if rng.random() < density}
    model = model_from(truth, extras, bg_weight=int(rng.integers(1, 400)))
    grid = fill_background(model, PARAMS)
    assert grid.is_complete()
    assert grid.history["fill_passes"] <= rows * cols + 2


def test_safety_valve_for_isolated_node():
    model = model_from(smooth_scene(1, 1), {(0, 0): [(clutter(), 10)]})
    grid = fill_background(model, PARAMS, BackgroundGrid(model))
    assert grid.labels[0, 0] == 1 and grid.history["forced_nodes"] == 1


# -- ICM ------------------------------------------------------------------------

def _ambiguous_model():
    truth = smooth_scene(5, 6)
    extras = {n: [(clutter(seed=n[0] * 6 + n[1]), 300)]
              for n in np.ndindex(5, 6) if 1 <= n[0] <= 3 and 1 <= n[1] <= 4}
    return model_from(truth, extras)


def test_icm_zero_iterations_is_identity():
    model = _ambiguous_model()
    filled = fill_background(model, PARAMS)
    out = icm_refine(model, filled, GibbsParams(icm_iterations=0))
    np.testing.assert_array_equal(out.labels, filled.labels)
    assert out.history["icm_changes"] == []
    assert out.render().tobytes() == filled.render().tobytes()


def test_icm_at_local_maximum_stops():
    model = _ambiguous_model()
    filled = fill_background(model, PARAMS)
    np.testing.assert_array_equal(filled.labels, true_labels(model))
    assert icm_refine(model, filled, PARAMS).history["icm_changes"] == [0]


@pytest.mark.parametrize("parallel", [False, True])
def test_icm_repairs_corrupted_node(parallel):
    model = _ambiguous_model()
    grid = fill_background(model, PARAMS)
    grid[(2, 2)] = 0
    out = icm_refine(model, grid, GibbsParams(parallel=parallel))
    np.testing.assert_array_equal(out.labels, true_labels(model))
    assert len(out.history["icm_changes"]) <= 2 and out.history["icm_changes"][0] == 1


def test_icm_changes_only_on_strict_improvement():
    model = _ambiguous_model()
    grid = fill_background(model, PARAMS)
    for node in [(1, 1), (3, 4), (2, 3)]:
        grid[node] = 0
    before = {n: select_label(model, grid, n, PARAMS)[1].log_posterior[grid[n]]
              for n in np.ndindex(grid.shape) if model.counts[model.node_index(*n)] > 1}
    out = icm_refine(model, grid, GibbsParams(icm_iterations=1))
    for node, old in before.items():
        if out[node] != grid[node]:
            new = select_label(model, grid, node, PARAMS)[1].log_posterior[out[node]]
            assert new > old


def test_icm_needs_complete_grid():
    model = _ambiguous_model()
    with pytest.raises(ValueError):
        icm_refine(model, BackgroundGrid(model), PARAMS)


# -- end to end -----------------------------------------------------------------

def test_clean_sequence_gives_block_means(rng):
    truth = smooth_scene(3, 4, n=16)
    frames = np.clip(np.floor(truth + rng.normal(0, 1, (20,) + truth.shape) + 0.5), 0, 255)
    frames = frames.astype(np.uint8)
    result = estimate_background(FrameSequence(frames))
    expected = np.clip(np.floor(frames.astype(float).mean(axis=0) + 0.5), 0, 255)
    assert result.report["s_histogram"] == {"1": 12}
    np.testing.assert_array_equal(result.image, expected)
    assert np.abs(result.image - frames[0].astype(float)).mean() < 1.0


def test_estimate_is_deterministic(bootstrap_scene):
    frames = bootstrap_scene.frames.subsequence(0, 120)
    a = estimate_background(frames, icm_iterations=2)
    b = estimate_background(frames, icm_iterations=2)
    assert a.image.tobytes() == b.image.tobytes()
    np.testing.assert_array_equal(a.grid.labels, b.grid.labels)


def test_estimate_report_fields(stationary_scene):
    result = estimate_background(stationary_scene.frames.subsequence(0, 30), icm_iterations=0)
    report = result.report
    assert report["grid"] == {"rows": 15, "cols": 20, "block_size": 16}
    assert report["raw_frame_bytes"] == 30 * 320 * 240
    assert sum(report["s_histogram"].values()) == 300
    assert report["icm_changes"] == []
    assert result.image.shape == (240, 320) and result.image.dtype == np.uint8


def test_estimate_needs_two_frames():
    from blockbg.errors import EstimationError

    with pytest.raises(EstimationError):
        estimate_background(FrameSequence(np.zeros((1, 32, 32), np.uint8)))
