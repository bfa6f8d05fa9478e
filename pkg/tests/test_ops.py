import numpy as np
import pytest

from coarsegrasp import ops


def naive_conv3x3_s2(x, w, b):
    # direct-loop oracle, padding 1
    n, c, h, wd = x.shape
    f = w.shape[0]
    oh, ow = h // 2, wd // 2
    xp = np.zeros((n, c, h + 2, wd + 2))
    xp[:, :, 1:-1, 1:-1] = x
    out = np.zeros((n, f, oh, ow))
    for ni in range(n):
        for fi in range(f):
            for i in range(oh):
                for j in range(ow):
                    acc = b[fi]
                    for ci in range(c):
                        for di in range(3):
                            for dj in range(3):
                                acc += w[fi, ci, di, dj] * xp[ni, ci, 2 * i + di, 2 * j + dj]
                    out[ni, fi, i, j] = acc
    return out


class TestConv:
    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 3, 8, 8))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        out, _ = ops.conv3x3_s2_forward(x, w, b)
        assert np.abs(out - naive_conv3x3_s2(x, w, b)).max() < 1e-9

    def test_backward_is_adjoint(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 3, 8, 8))
        w = rng.normal(size=(4, 3, 3, 3))
        b = np.zeros(4)
        out, _ = ops.conv3x3_s2_forward(x, w, b)
        g = rng.normal(size=out.shape)
        dx, dw, db = ops.conv3x3_s2_backward(g, x, w)
        # bilinear map: the inner product transfers to each argument separately
        assert (out * g).sum() == pytest.approx((x * dx).sum(), rel=1e-10)
        assert (out * g).sum() == pytest.approx((w * dw).sum(), rel=1e-10)
        assert db == pytest.approx(g.sum(axis=(0, 2, 3)))

    def test_odd_dims_rejected(self):
        with pytest.raises(ValueError):
            ops.conv3x3_s2_forward(np.zeros((1, 1, 7, 8)), np.zeros((1, 1, 3, 3)), np.zeros(1))


class TestUpsample:
    def test_constant_preserved(self):
        x = np.full((1, 1, 4, 4), 3.25)
        up = ops.upsample_bilinear_forward(x, 4)
        assert up.shape == (1, 1, 16, 16)
        assert np.abs(up - 3.25).max() < 1e-12

    def test_backward_is_adjoint(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 3, 4, 4))
        g = rng.normal(size=(2, 3, 16, 16))
        lhs = (ops.upsample_bilinear_forward(x, 4) * g).sum()
        rhs = (x * ops.upsample_bilinear_backward(g, x.shape, 4)).sum()
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestNonlinearities:
    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(scale=10.0, size=(4, 1, 8, 8))
        p = ops.spatial_softmax(logits)
        assert np.abs(p.reshape(4, -1).sum(axis=1) - 1.0).max() < 1e-9
        assert (p > 0).all()

    def test_logistic_range_and_symmetry(self):
        z = np.linspace(-30, 30, 101)
        p = ops.logistic(z)
        assert ((p > 0) & (p < 1)).all()
        assert np.abs(p + p[::-1] - 1.0).max() < 1e-12

    def test_softmax_logit_grad_finite_difference(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=(1, 1, 4, 4))
        t = rng.uniform(size=(1, 1, 4, 4))
        p = ops.spatial_softmax(z)
        g = ops.softmax_logit_grad(p, 2.0 * (p - t))  # d/dp of sum (p - t)^2
        h = 1e-6
        for i in range(4):
            zp = z.copy(); zp[0, 0, 0, i] += h
            zm = z.copy(); zm[0, 0, 0, i] -= h
            num = (((ops.spatial_softmax(zp) - t) ** 2).sum()
                   - ((ops.spatial_softmax(zm) - t) ** 2).sum()) / (2 * h)
            assert g[0, 0, 0, i] == pytest.approx(num, abs=1e-6)


class TestRotation:
    def smooth_image(self, n=32):
        xx, yy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        return np.sin(xx / 5.0) * np.cos(yy / 7.0) + 1.0

    def test_zero_angle_identity(self):
        img = self.smooth_image()
        assert np.array_equal(ops.rotate_map(img, 0.0), img)

    def test_four_quarter_turns_identity(self):
        img = self.smooth_image()
        out = img
        for _ in range(4):
            out = ops.rotate_map(out, np.pi / 2)
        assert np.abs(out - img).max() < 1e-9

    def test_pi_8_round_trip_interior(self):
        img = self.smooth_image()
        back = ops.rotate_map(ops.rotate_map(img, np.pi / 8), np.pi / 8, "inverse")
        assert np.abs((back - img)[8:-8, 8:-8]).max() < 0.05

    def test_multichannel(self):
        img = np.stack([self.smooth_image(), 2 * self.smooth_image()], axis=-1)
        out = ops.rotate_map(img, np.pi / 2)
        assert out.shape == img.shape
        assert np.abs(out[..., 1] - 2 * out[..., 0]).max() < 1e-9

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            ops.rotate_map(np.zeros((4, 6)), 0.1)

    def test_grad_is_adjoint(self):
        rng = np.random.default_rng(6)
        for angle in (np.pi / 8, -np.pi / 3, 1.0):
            x = rng.normal(size=(12, 12))
            g = rng.normal(size=(12, 12))
            lhs = (ops.rotate_map(x, angle) * g).sum()
            rhs = (x * ops.rotate_map_grad(g, angle)).sum()
            assert lhs == pytest.approx(rhs, rel=1e-10)
