"""Both kernel backends against naive loops and against each other."""

import os
import subprocess
import sys

import numpy as np
import pytest

from downbench._kernels import pure

try:
    from downbench._kernels import _fast as fast
except ImportError:  # pragma: no cover - extension not built
    fast = None

BACKENDS = [pure] if fast is None else [pure, fast]


def _ids(mod):
    return mod.BACKEND


@pytest.fixture(params=BACKENDS, ids=_ids)
def backend(request):
    return request.param


# --- naive references ---------------------------------------------------

def naive_conv_valid(src, taps):
    k = len(taps)
    n = src.shape[0] - k + 1
    out = np.zeros((n, src.shape[1]))
    for o in range(n):
        for j in range(k):
            for x in range(src.shape[1]):
                out[o, x] += taps[j] * src[o + j, x]
    return out


def naive_block_mean(src, s):
    h, w = src.shape
    ho, wo = -(-h // s), -(-w // s)
    out = np.zeros((ho, wo))
    for by in range(ho):
        for bx in range(wo):
            tile = src[by * s:(by + 1) * s, bx * s:(bx + 1) * s]
            out[by, bx] = tile.sum() / tile.size
    return out


def naive_dpid(src, guide, s, lam):
    h, w, c = src.shape
    ho, wo = guide.shape[:2]
    out = np.zeros((ho, wo, c))
    for by in range(ho):
        for bx in range(wo):
            tile = src[by * s:min((by + 1) * s, h), bx * s:min((bx + 1) * s, w)]
            d = np.sqrt(((tile - guide[by, bx]) ** 2).sum(axis=2)) / np.sqrt(c)
            wts = d**lam
            if wts.sum() == 0.0:
                out[by, bx] = tile.reshape(-1, c).mean(axis=0)
            else:
                out[by, bx] = (wts[:, :, None] * tile).reshape(-1, c).sum(axis=0) / wts.sum()
    return out


# --- agreement with the references --------------------------------------

def test_conv_valid_matches_naive(backend, gen):
    src = gen.random((12, 7))
    taps = gen.random(5)
    got = backend.conv_valid_axis0(src, taps)
    np.testing.assert_allclose(got, naive_conv_valid(src, taps), atol=1e-12)


def test_gather_matches_direct_sum(backend, gen):
    src = gen.random((10, 6))
    idx = gen.integers(0, 10, size=(4, 3)).astype(np.int32)
    wts = gen.random((4, 3))
    got = backend.gather_axis0(src, idx, wts)
    want = np.zeros((4, 6))
    for o in range(4):
        for j in range(3):
            want[o] += wts[o, j] * src[idx[o, j]]
    np.testing.assert_allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("shape,s", [((12, 12), 3), ((13, 11), 4), ((8, 8), 8), ((5, 5), 2)])
def test_block_mean_matches_naive(backend, gen, shape, s):
    src = gen.random(shape)
    np.testing.assert_allclose(
        backend.block_mean2d(src, s), naive_block_mean(src, s), atol=1e-12
    )


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_dpid_matches_naive(backend, gen, lam):
    src = gen.random((12, 8, 3))
    guide = np.stack([backend.block_mean2d(np.ascontiguousarray(src[:, :, c]), 4) for c in range(3)], axis=-1)
    got = backend.dpid_reduce(src, np.ascontiguousarray(guide), 4, lam)
    np.testing.assert_allclose(got, naive_dpid(src, guide, 4, lam), atol=1e-12)


def test_dpid_lambda_zero_is_box_bitwise(backend, gen):
    # lambda = 0 makes every weight exactly 1.0, which must reproduce the
    # plain block mean bit for bit within a backend
    src = gen.random((16, 12, 3))
    guide = np.stack([backend.block_mean2d(np.ascontiguousarray(src[:, :, c]), 4) for c in range(3)], axis=-1)
    got = backend.dpid_reduce(src, np.ascontiguousarray(guide), 4, 0.0)
    want = np.stack([backend.block_mean2d(np.ascontiguousarray(src[:, :, c]), 4) for c in range(3)], axis=-1)
    np.testing.assert_array_equal(got, want)


def test_dpid_uniform_tile_falls_back_to_mean(backend):
    # src equal to the guide everywhere gives all-zero weights
    src = np.full((4, 4, 3), 0.25)
    guide = np.full((1, 1, 3), 0.25)
    out = backend.dpid_reduce(src, guide, 4, 1.0)
    np.testing.assert_allclose(out, 0.25, atol=1e-15)


# --- cross-backend ------------------------------------------------------

@pytest.mark.skipif(fast is None, reason="compiled backend not built")
def test_backends_agree(gen):
    src = gen.random((24, 17))
    taps = gen.random(7)
    np.testing.assert_allclose(
        pure.conv_valid_axis0(src, taps), fast.conv_valid_axis0(src, taps), atol=1e-12
    )
    np.testing.assert_allclose(
        pure.block_mean2d(src, 5), fast.block_mean2d(src, 5), atol=1e-12
    )
    vol = gen.random((12, 12, 3))
    guide = np.stack([pure.block_mean2d(vol[:, :, c], 3) for c in range(3)], axis=-1)
    guide = np.ascontiguousarray(guide)
    np.testing.assert_allclose(
        pure.dpid_reduce(vol, guide, 3, 1.0), fast.dpid_reduce(vol, guide, 3, 1.0),
        atol=1e-12,
    )


# --- selection ----------------------------------------------------------

def _backend_in_subprocess(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop("DOWNBENCH_KERNELS", None)
    else:
        env["DOWNBENCH_KERNELS"] = env_value
    return subprocess.run(
        [sys.executable, "-c", "from downbench._kernels import BACKEND; print(BACKEND)"],
        capture_output=True, text=True, env=env,
    )


def test_env_var_selects_backend():
    out = _backend_in_subprocess("pure")
    assert out.returncode == 0 and out.stdout.strip() == "pure"
    if fast is not None:
        out = _backend_in_subprocess("fast")
        assert out.returncode == 0 and out.stdout.strip() == "fast"
    out = _backend_in_subprocess("auto")
    assert out.returncode == 0 and out.stdout.strip() in ("pure", "fast")


def test_env_var_rejects_unknown_choice():
    out = _backend_in_subprocess("vectorized")
    assert out.returncode != 0
    assert "DOWNBENCH_KERNELS" in out.stderr
