import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import ConvergenceWarning, NotFittedError

from besselpde import BesselSemigroup, PicardSolver, semigroup
from besselpde.mspace import bump


class TestBesselSemigroup:
    def test_params_round_trip(self):
        est = BesselSemigroup(delta=0.25, t=0.3, n=128)
        assert est.get_params()["delta"] == 0.25
        est.set_params(t=0.7)
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        assert not hasattr(twin, "operator_")

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            BesselSemigroup().transform(np.zeros((1, 5)))

    def test_transform_matches_apply(self):
        est = BesselSemigroup(delta=0.5, t=0.4, n=256).fit()
        phi = bump(1.5, 1.0)
        X = np.vstack([est.sample(phi.f), 2 * est.sample(phi.f)])
        out = est.transform(X)
        ref = semigroup.apply(semigroup.KernelParams(0.5), 0.4, est.grid_.sample(phi.f)).values
        np.testing.assert_allclose(out[0], ref, atol=1e-12)
        np.testing.assert_allclose(out[1], 2 * ref, atol=1e-12)

    def test_derivative_matches_apply_dx(self):
        est = BesselSemigroup(delta=0.5, t=0.4, n=256, derivative=True).fit()
        f = est.grid_.sample(bump(1.5, 1.0).f)
        ref = semigroup.apply_dx(semigroup.KernelParams(0.5), 0.4, f).values
        np.testing.assert_allclose(est.transform(f.values[None, :])[0], ref, atol=1e-10)

    def test_identity_at_zero(self):
        est = BesselSemigroup(t=0.0, n=64).fit()
        X = np.random.default_rng(0).normal(size=(3, est.n_features_in_))
        np.testing.assert_array_equal(est.transform(X), X)

    def test_fit_transform_and_shape_check(self):
        est = BesselSemigroup(t=0.2, n=64)
        X = np.ones((2, 65))
        assert est.fit_transform(X).shape == (2, 65)
        with pytest.raises(ValueError):
            est.transform(np.ones((2, 10)))

    @pytest.mark.parametrize("kw", [{"delta": 1.0}, {"t": -1.0}])
    def test_bad_params(self, kw):
        with pytest.raises(ValueError):
            BesselSemigroup(**kw).fit()


class TestPicardSolver:
    def test_fit_predict_at_nodes(self):
        est = PicardSolver(f="sin", n=128, n_steps=16).fit()
        assert est.converged_ and est.n_iter_ >= 1
        mesh_t = est.solution_.mesh.times
        x = est.grid_.nodes[::7]
        X = np.column_stack([np.full(x.size, mesh_t[3]), x])
        np.testing.assert_allclose(est.predict(X), est.solution_.values[3, ::7], atol=1e-12)

    def test_predict_outside(self):
        est = PicardSolver(f="zero", n=64, n_steps=8).fit()
        assert est.predict([[0.0, est.grid_.x_max + 1.0]])[0] == 0.0
        with pytest.raises(ValueError):
            est.predict([[-0.1, 1.0]])
        with pytest.raises(ValueError):
            est.predict([[0.0, 1.0, 2.0]])

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            PicardSolver().predict([[0.0, 1.0]])

    def test_expression_and_callable(self):
        a = PicardSolver(f="0.5*sin(u)", lipschitz_c=0.5, n=64, n_steps=8).fit()
        b = PicardSolver(
            f=lambda t, x, u, v: 0.5 * np.sin(u), lipschitz_c=0.5, n=64, n_steps=8
        ).fit()
        np.testing.assert_allclose(a.solution_.values, b.solution_.values, atol=1e-14)
        with pytest.raises(ValueError):
            PicardSolver(f="0.5*sin(u)", n=64, n_steps=8).fit()

    def test_convergence_warning(self):
        with pytest.warns(ConvergenceWarning):
            est = PicardSolver(f="sin", n=64, n_steps=8, max_iter=1).fit()
        assert not est.converged_

    def test_clone(self):
        est = PicardSolver(f="linear", tol=1e-8)
        assert clone(est).get_params() == est.get_params()
