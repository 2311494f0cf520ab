import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from besselpde.config import ConfigError, RunConfig, load_config, parse_config
from besselpde.expr import ExpressionError, compile_expression


class TestExpression:
    def test_basic(self):
        f = compile_expression("sin(u) + 0.5*v - t*x**2")
        got = f(1.0, 2.0, 0.3, 4.0)
        assert float(got) == pytest.approx(math.sin(0.3) + 2.0 - 4.0)

    def test_vectorized_broadcast(self):
        f = compile_expression("u + 1")
        out = f(np.zeros((3, 1)), np.zeros((1, 4)), np.ones((3, 4)), np.zeros((3, 4)))
        assert out.shape == (3, 4) and np.all(out == 2)

    def test_constant_broadcasts(self):
        f = compile_expression("2*pi")
        assert f(0.0, np.zeros(5), np.zeros(5), np.zeros(5)).shape == (5,)

    @pytest.mark.parametrize(
        "text",
        ["", "import os", "__import__('os')", "u.real", "u[0]", "y + 1", "open('f')",
         "sin(u, out=u)", "lambda: 1", "u if v else t", "1 +", "True"],
    )
    def test_rejects(self, text):
        with pytest.raises(ExpressionError):
            compile_expression(text)

    @given(u=st.floats(-50, 50), v=st.floats(-50, 50))
    def test_matches_python(self, u, v):
        f = compile_expression("tanh(u) - 0.25*abs(v) + exp(-x)")
        assert float(f(0.0, 1.0, u, v)) == pytest.approx(
            math.tanh(u) - 0.25 * abs(v) + math.exp(-1.0)
        )


class TestConfig:
    def test_defaults_valid(self):
        cfg = RunConfig()
        assert cfg.delta == 0.5 and cfg.grid.n == 256 and cfg.solver.tol == 1e-6
        assert cfg.x_max() == pytest.approx(math.sqrt(2 * math.log(1e12)) + 4.0)

    def test_round_trip(self):
        cfg = parse_config(
            "[run]\ndelta = 0.25\nT = 2.0\n[problem]\npreset = custom\n"
            "expression = sin(u) + 0.1*v\nlipschitz_c = 1.1\n[solver]\nlambda_override = 3.5\n"
        )
        assert parse_config(cfg.to_ini()) == cfg
        assert cfg.problem.expression == "sin(u) + 0.1*v"

    @given(
        delta=st.floats(0.01, 0.99),
        T=st.floats(0.01, 10),
        n=st.integers(16, 4096),
        tol=st.floats(1e-14, 1e-1),
        seed=st.integers(0, 2**31),
    )
    def test_round_trip_property(self, delta, T, n, tol, seed):
        cfg = RunConfig().replace("run", delta=delta, T=T).replace("grid", n=n)
        cfg = cfg.replace("solver", tol=tol).replace("mc", seed=seed)
        assert parse_config(cfg.to_ini()) == cfg

    @pytest.mark.parametrize(
        "text",
        [
            "[run]\ndelta = 1.5\n",
            "[run]\ndelta = 0\n",
            "[run]\ncolour = red\n",
            "[nonsense]\na = 1\n",
            "[grid]\nn = 8\n",
            "[grid]\nn = many\n",
            "[grid]\nscheme = chebyshev\n",
            "[solver]\ntol = -1\n",
            "[solver]\ntol = nan\n",
            "[problem]\npreset = custom\n",
            "[problem]\npreset = custom\nexpression = u\n",
            "[problem]\npreset = custom\nexpression = import os\nlipschitz_c = 1\n",
            "[problem]\npreset = cubic\n",
            "no section header",
            "[checks]\ntol = 0\n",
        ],
    )
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_overrides(self):
        cfg = parse_config("[run]\ndelta = 0.25\n", {"run.delta": "0.75", "mc.seed": "9"})
        assert cfg.delta == 0.75 and cfg.mc.seed == 9
        with pytest.raises(ConfigError):
            parse_config("", {"delta": "0.5"})

    def test_load(self, tmp_path):
        p = tmp_path / "c.ini"
        p.write_text("[mesh]\nn_steps = 12\n", encoding="utf-8")
        assert load_config(p).mesh.n_steps == 12
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.ini")


def test_inline_comments_and_readme_defaults():
    text = (
        "[grid]\nscheme = graded   ; or uniform\nx_max =      ; rule\n"
        "[problem]\npreset = sin  # default\n"
    )
    assert parse_config(text) == RunConfig()
