import json

import numpy as np
import pytest

from quarts.data import (
    RESULT_HEADER,
    ProxyPanel,
    SchemaError,
    SyntheticSpec,
    build_panel,
    generate_synthetic_panel,
    load_panel,
    load_result,
    read_proxies,
    serialize_result,
    write_panel,
)
from quarts.reconstruct import ReconstructionResult


def write(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def files(tmp_path):
    years = range(1981, 2001)
    rows = ["year,a,b"] + [f"{y},{0.1 * i},{1 - 0.05 * i}" for i, y in enumerate(years)]
    inst = ["year,value"] + [f"{y},{0.2 * i}" for i, y in enumerate(years) if y >= 1991]
    return (write(tmp_path / "p.csv", "\n".join(rows) + "\n"),
            write(tmp_path / "i.csv", "\n".join(inst) + "\n"))


class TestReading:
    def test_round_trip_panel(self, files):
        panel = load_panel(*files)
        assert panel.n == 10 and panel.m == 10 and panel.p == 2
        assert panel.hindcast
        np.testing.assert_allclose(panel.proxies[:, 0], 0.1 * np.arange(20))
        assert panel.names == ["a", "b"]
        assert panel.filter_report["dropped"] == 0

    def test_missing_in_reconstruction_drops_proxy(self, tmp_path, files):
        text = files[0].read_text().replace("1983,0.2,", "1983,NA,")
        p = write(tmp_path / "p2.csv", text)
        panel = load_panel(p, files[1])
        assert panel.names == ["b"]
        assert panel.filter_report == {"total": 2, "retained": 1, "dropped": 1, "dropped_ids": ["a"]}

    def test_missing_outside_spans_kept(self, tmp_path, files):
        text = files[0].read_text().replace("1983,0.2,", "1983,,")
        p = write(tmp_path / "p3.csv", text)
        panel = load_panel(p, files[1], reconstruction=(1985, 1990))
        assert panel.names == ["a", "b"] and panel.m == 6

    def test_malformed_cell_named(self, tmp_path, files):
        text = files[0].read_text().replace("1985,0.4", "1985,abc")
        p = write(tmp_path / "bad.csv", text)
        with pytest.raises(SchemaError, match=r"line 6, column 'a'"):
            read_proxies(p)

    def test_bad_header(self, tmp_path):
        with pytest.raises(SchemaError, match="year"):
            read_proxies(write(tmp_path / "h.csv", "time,a\n1,2\n"))

    def test_nonconsecutive_years(self, tmp_path):
        with pytest.raises(SchemaError, match="consecutive"):
            read_proxies(write(tmp_path / "y.csv", "year,a\n1,2\n3,4\n"))

    def test_instrumental_year_outside_proxies(self, tmp_path, files):
        inst = write(tmp_path / "i2.csv", "year,value\n2000,1\n2001,2\n")
        with pytest.raises(SchemaError, match="2001"):
            load_panel(files[0], inst)

    def test_descending_years(self, tmp_path, files):
        lines = files[0].read_text().strip().split("\n")
        p = write(tmp_path / "desc.csv", "\n".join([lines[0], *lines[:0:-1]]) + "\n")
        a, b = load_panel(files[0], files[1]), load_panel(p, files[1])
        np.testing.assert_array_equal(a.time[a.model_order()], b.time[b.model_order()])
        np.testing.assert_array_equal(a.proxies[a.model_order()], b.proxies[b.model_order()])

    def test_write_panel_round_trip(self, tmp_path, files):
        panel = load_panel(*files)
        write_panel(panel, tmp_path / "wp.csv", tmp_path / "wi.csv")
        again = load_panel(tmp_path / "wp.csv", tmp_path / "wi.csv")
        np.testing.assert_array_equal(again.proxies, panel.proxies)
        np.testing.assert_array_equal(again.calibration, panel.calibration)


class TestPanel:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            build_panel(np.arange(10), np.ones((10, 1)), ["a"], np.arange(5, 10), np.ones(5),
                        reconstruction=(3, 6))

    def test_split_reconstruction_rejected(self):
        y = np.arange(10)
        t = np.linspace(0, 1, 10)[:, None] + np.zeros((10, 1))
        with pytest.raises(ValueError):
            ProxyPanel(y, t, ["a"], np.r_[np.nan, np.ones(8), np.nan],
                       np.r_[False, np.ones(8, bool), False])

    def test_forecast_orientation(self):
        panel, _ = generate_synthetic_panel(n=30, m=5, p=1, hindcast=False)
        assert not panel.hindcast
        np.testing.assert_array_equal(panel.model_order(), np.arange(35))


class TestSynthetic:
    def test_zero_noise_exact(self):
        panel, truth = generate_synthetic_panel(n=40, m=10, p=3, innovation="none")
        beta = np.array(truth["beta"])
        np.testing.assert_array_equal(truth["y"], beta[0] + panel.proxies @ beta[1:])
        cal = panel.calibration
        np.testing.assert_array_equal(panel.instrumental[cal], truth["y"][cal])

    def test_same_seed_same_panel(self):
        a, _ = generate_synthetic_panel(seed=3)
        b, _ = generate_synthetic_panel(seed=3)
        c, _ = generate_synthetic_panel(seed=4)
        assert a.proxies.tobytes() == b.proxies.tobytes()
        assert np.array_equal(a.instrumental, b.instrumental, equal_nan=True)
        assert not np.array_equal(a.proxies, c.proxies)

    def test_hindcast_residual_direction(self):
        # residual AR runs from the calibration end into the past
        panel, truth = generate_synthetic_panel(n=50, m=20, p=1, phi=[0.5], seed=5)
        order = panel.model_order()
        e = truth["residuals"][order]
        d = truth["innovations_model_time"]
        np.testing.assert_allclose(e[1:] - 0.5 * e[:-1], d[1:], atol=1e-12)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SyntheticSpec(phi=[1.2]).validate()
        with pytest.raises(ValueError):
            SyntheticSpec(p=2, beta=[1.0]).validate()


class TestResults:
    def result(self):
        T = 6
        rng = np.random.default_rng(0)
        vals = [rng.standard_normal(T) / 3 for _ in range(6)]
        return ReconstructionResult(time=np.arange(1990, 1990 + T), point=vals[0], lower=vals[1],
                                    upper=vals[2], in_sample=np.r_[np.zeros(3, bool), np.ones(3, bool)],
                                    smoothed_point=vals[3], smoothed_lower=vals[4],
                                    smoothed_upper=vals[5], metadata={"q": 1, "note": "x"})

    def test_header_exact(self, tmp_path):
        serialize_result(self.result(), tmp_path / "r.csv")
        first = (tmp_path / "r.csv").read_text().split("\n")[0]
        assert first == "time,point,lower,upper,in_sample,smoothed_point,smoothed_lower,smoothed_upper"
        assert first == RESULT_HEADER

    def test_round_trip(self, tmp_path):
        r = self.result()
        meta = serialize_result(r, tmp_path / "r.csv")
        assert json.loads(meta.read_text()) == {"q": 1, "note": "x"}
        back = load_result(tmp_path / "r.csv")
        for name in ("point", "lower", "upper", "smoothed_point", "smoothed_lower", "smoothed_upper"):
            np.testing.assert_allclose(getattr(back, name), getattr(r, name), rtol=0, atol=1e-12)
        np.testing.assert_array_equal(back.time, r.time)
        np.testing.assert_array_equal(back.in_sample, r.in_sample)
        assert back.metadata == r.metadata

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(ValueError):
            serialize_result(self.result(), tmp_path / "r.parquet", format="parquet")
