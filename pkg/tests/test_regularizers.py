import numpy as np
import pytest
from pydantic import ValidationError

from analysis.geometry import class_stats, hessian_trace_blocks, ncc, pairwise_sq_dists, relative_flatness
from analysis.oracles import fd_grad
from analysis.regularizers import apply_schedule, flatness_reg, ncc_fixed_distances, ncc_reg
from models.configs import RegConfig
from utils.errors import CollapsedMeansError
from utils.numkit import softmax_rows


def _features(seed: int, k: int = 3, per_class: int = 4, d: int = 5):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), per_class)
    rng.shuffle(labels)
    phi = rng.normal(size=(len(labels), d)) + 2.0 * rng.normal(size=(k, d))[labels]
    return phi, labels


def _classifier(seed: int, k: int = 3, d: int = 5):
    rng = np.random.default_rng(10_000 + seed)
    return rng.normal(size=(k, d)), rng.normal(size=k)


def _max_rel_error(exact, numeric) -> float:
    return float(np.max(np.abs(exact - numeric)) / np.max(np.abs(numeric)))


@pytest.mark.parametrize("mode", ["mean_variance", "sum_variance"])
def test_ncc_reg_value_matches_measure(mode):
    phi, labels = _features(0)
    assert ncc_reg(phi, labels, mode).value == pytest.approx(ncc(class_stats(phi, labels), mode), rel=1e-12)


@pytest.mark.parametrize("mode", ["mean_variance", "sum_variance"])
@pytest.mark.parametrize("seed", range(10))
def test_ncc_reg_gradient_matches_finite_differences(seed, mode):
    phi, labels = _features(seed)
    grad = ncc_reg(phi, labels, mode).grad_phi
    numeric = fd_grad(lambda flat: ncc_reg(flat.reshape(phi.shape), labels, mode).value, phi.ravel())
    assert grad.shape == phi.shape
    assert _max_rel_error(grad.ravel(), numeric) < 1e-4


def test_ncc_reg_raises_on_coincident_means():
    phi = np.array([[0.0, 1.0], [0.0, -1.0], [0.0, 2.0], [0.0, -2.0]])
    with pytest.raises(CollapsedMeansError):
        ncc_reg(phi, np.array([0, 0, 1, 1]))


def test_flatness_reg_value_matches_measure():
    phi, _ = _features(1)
    w, b = _classifier(1)
    probs = softmax_rows(phi @ w.T + b)
    expected = relative_flatness(w, hessian_trace_blocks(w, phi, probs))
    assert flatness_reg(w, phi, probs).value == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_flatness_reg_total_gradients_match_finite_differences(seed):
    phi, _ = _features(seed)
    w, b = _classifier(seed)

    def kappa(w_, phi_, b_):
        return flatness_reg(w_, phi_, softmax_rows(phi_ @ w_.T + b_)).value

    res = flatness_reg(w, phi, softmax_rows(phi @ w.T + b))
    num_w = fd_grad(lambda f: kappa(f.reshape(w.shape), phi, b), w.ravel())
    num_phi = fd_grad(lambda f: kappa(w, f.reshape(phi.shape), b), phi.ravel())
    num_b = fd_grad(lambda f: kappa(w, phi, f), b)
    assert _max_rel_error(res.grad_w.ravel(), num_w) < 1e-4
    assert _max_rel_error(res.grad_phi.ravel(), num_phi) < 1e-4
    assert _max_rel_error(res.grad_b, num_b) < 1e-4


def test_flatness_reg_stop_gradient_keeps_direct_terms_only():
    phi, _ = _features(4)
    w, b = _classifier(4)
    probs = softmax_rows(phi @ w.T + b)
    res = flatness_reg(w, phi, probs, stop_gradient=True)

    num_w = fd_grad(lambda f: flatness_reg(f.reshape(w.shape), phi, probs).value, w.ravel())
    num_phi = fd_grad(lambda f: flatness_reg(w, f.reshape(phi.shape), probs).value, phi.ravel())
    assert _max_rel_error(res.grad_w.ravel(), num_w) < 1e-4
    assert _max_rel_error(res.grad_phi.ravel(), num_phi) < 1e-4
    np.testing.assert_array_equal(res.grad_b, 0.0)


def test_schedule_always_and_none():
    assert apply_schedule(RegConfig(kind="ncc", lambda_reg=0.01), 10_000) == 0.01
    assert apply_schedule(RegConfig(kind="none", lambda_reg=0.01), 0) == 0.0


def test_schedule_unplug_is_inclusive():
    cfg = RegConfig(kind="flatness", lambda_reg=1e-4, schedule="unplug_at", unplug_epoch=100)
    assert apply_schedule(cfg, 99) == 1e-4
    assert apply_schedule(cfg, 100) == 0.0
    assert apply_schedule(cfg, 5000) == 0.0


def test_unplug_schedule_requires_epoch():
    with pytest.raises(ValidationError):
        RegConfig(kind="flatness", lambda_reg=1e-4, schedule="unplug_at")


@pytest.mark.parametrize("mode", ["mean_variance", "sum_variance"])
@pytest.mark.parametrize("seed", range(5))
def test_ncc_reg_stop_gradient_differentiates_variances_only(seed, mode):
    phi, labels = _features(seed)
    dists = pairwise_sq_dists(class_stats(phi, labels).means)
    res = ncc_reg(phi, labels, mode, stop_gradient=True)
    assert res.value == pytest.approx(ncc_fixed_distances(phi, labels, dists, mode), rel=1e-12)
    numeric = fd_grad(lambda flat: ncc_fixed_distances(flat.reshape(phi.shape), labels, dists, mode), phi.ravel())
    assert _max_rel_error(res.grad_phi.ravel(), numeric) < 1e-4


def test_ncc_reg_stop_gradient_leaves_class_means_in_place():
    phi, labels = _features(3)
    grad = ncc_reg(phi, labels, stop_gradient=True).grad_phi
    # zero per-class sums: the class means do not move
    sums = np.zeros((3, phi.shape[1]))
    np.add.at(sums, labels, grad)
    np.testing.assert_allclose(sums, 0.0, atol=1e-12)


def test_ncc_cap_is_only_valid_for_the_ncc_penalty():
    assert RegConfig(kind="ncc", lambda_reg=1e-3, ncc_cap=250.0).ncc_cap == 250.0
    with pytest.raises(ValidationError):
        RegConfig(kind="flatness", lambda_reg=1e-3, ncc_cap=250.0)
    with pytest.raises(ValidationError):
        RegConfig(kind="ncc", lambda_reg=1e-3, ncc_cap=0.0)
