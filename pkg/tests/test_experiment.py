import math
import tempfile
import unittest
from pathlib import Path

from pydantic import ValidationError

from fnmanifold.experiment import (
    DELTA_SETTINGS,
    NOT_APPLICABLE,
    ExperimentConfig,
    ExperimentRecord,
    delta_report,
    load_records,
    run_experiment,
)
from fnmanifold.synthdata import generate_setting
from fnmanifold.tooling import save_dataset_csv


def small_config(output, **kwargs):
    values = dict(
        settings=["a1-l"],
        n=40,
        m=20,
        methods=["mds"],
        objectives=["auc"],
        metrics=["dir"],
        spaces=["function"],
        output=output,
    )
    values.update(kwargs)
    return ExperimentConfig(**values)


class TestRunExperiment(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.root = Path(self.temp_dir.name)

    def tearDown(self):
        self.temp_dir.cleanup()

    def test_one_cell(self):
        records = run_experiment(small_config(str(self.root)))
        self.assertEqual(len(records), 1)
        record = records[0]
        self.assertEqual(record.status, "ok")
        self.assertEqual(record.cell, "a1-l/mds/auc-dir-function")
        self.assertEqual(set(record.reports), {"function-dir", "function-geo", "parameter-dir", "parameter-geo"})
        self.assertIn("k", record.best_hyper)

        cell_dir = self.root / "a1-l" / "mds" / "auc-dir-function"
        extensions = {file.suffix for file in cell_dir.iterdir() if file.is_file()}
        self.assertEqual(extensions, {".csv", ".json", ".svg"})
        for name in ("tuning.json", "trace.csv", "embedding.csv", "embedding.json", "reports.json", "scatter.svg"):
            self.assertTrue((cell_dir / name).exists(), name)
        self.assertTrue((self.root / "a1-l" / "data.csv").exists())
        self.assertTrue((self.root / "a1-l" / "params.csv").exists())
        self.assertTrue((self.root / "manifest.json").exists())

    def test_rerun_is_bitwise_identical(self):
        cfg = small_config(str(self.root), methods=["isomap"], metrics=["geo"], spaces=["parameter"])
        run_experiment(cfg)
        files = sorted(p for p in self.root.rglob("*") if p.suffix in (".csv", ".json"))
        first = {p: p.read_bytes() for p in files}
        run_experiment(cfg)
        for path, content in first.items():
            self.assertEqual(path.read_bytes(), content, str(path))

    def test_records_roundtrip_through_manifest(self):
        records = run_experiment(small_config(str(self.root), spaces=["function", "parameter"]))
        loaded = load_records(str(self.root))
        self.assertEqual([r.cell for r in loaded], [r.cell for r in records])
        self.assertEqual([r.best_score for r in loaded], [r.best_score for r in records])
        self.assertEqual(loaded[0].best_hyper, records[0].best_hyper)

    def test_failed_cell_does_not_stop_the_run(self):
        cfg = small_config(str(self.root), methods=["isomap", "mds"], grid_overrides={"isomap": {"k": [500]}})
        records = run_experiment(cfg)
        self.assertEqual(len(records), 2)
        self.assertTrue(records[0].failed)
        self.assertTrue(records[0].status.startswith("error:"))
        self.assertEqual(records[1].status, "ok")
        self.assertTrue((self.root / "manifest.json").exists())

    def test_external_dataset_has_no_parameter_space(self):
        data, _ = generate_setting("a1-l", n=30, m=12, seed=4)
        path = str(self.root / "input.csv")
        save_dataset_csv(data, path)
        cfg = small_config(str(self.root / "out"), dataset=path, spaces=["function", "parameter"])
        records = run_experiment(cfg)
        self.assertEqual([r.setting for r in records], ["external", "external"])
        self.assertEqual(set(records[0].reports), {"function-dir", "function-geo"})
        self.assertEqual(records[1].status, NOT_APPLICABLE)
        self.assertFalse(records[1].failed)


class TestDeltaReport(unittest.TestCase):

    def records(self, method, ps, fs, skip=()):
        out = []
        for setting in DELTA_SETTINGS:
            for space, score in (("parameter", ps), ("function", fs)):
                if (setting, space) in skip:
                    continue
                out.append(ExperimentRecord(setting, method, "auc", "dir", space, best_score=score))
        return out

    def test_identical_scores(self):
        table = delta_report(self.records("isomap", 0.8, 0.8), "dir")
        self.assertEqual(len(table), 1)
        self.assertEqual(table.loc[0, "delta"], 0.0)
        self.assertEqual(table.loc[0, "missing"], "")

    def test_delta_is_absolute_difference_of_means(self):
        records = self.records("tsne", 0.6, 0.9)
        records.append(ExperimentRecord("a3-sr", "tsne", "auc", "dir", "parameter", best_score=0.0))
        row = delta_report(records, "dir").iloc[0]
        self.assertAlmostEqual(row["a_ps"], 0.6, places=12)
        self.assertAlmostEqual(row["a_fs"], 0.9, places=12)
        self.assertAlmostEqual(row["delta"], 0.3, places=12)

    def test_missing_cells(self):
        records = self.records("umap", 0.7, 0.9, skip={("a3-tp", "function")})
        records += self.records("mds", 0.5, 0.5)
        table = delta_report(records, "dir").set_index("method")
        self.assertTrue(math.isnan(table.loc["umap", "delta"]))
        self.assertEqual(table.loc["umap", "missing"], "a3-tp/function")
        self.assertEqual(table.loc["mds", "delta"], 0.0)

    def test_failed_and_foreign_records_are_ignored(self):
        records = self.records("isomap", 0.8, 0.8)
        records[0].status = "error: boom"
        self.assertTrue(math.isnan(delta_report(records, "dir").loc[0, "delta"]))
        geo = delta_report(self.records("isomap", 0.8, 0.8), "geo")
        self.assertTrue(math.isnan(geo.loc[0, "delta"]))
        with self.assertRaises(ValueError):
            delta_report(records, "cosine")


class TestExperimentConfig(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.root = Path(self.temp_dir.name)

    def tearDown(self):
        self.temp_dir.cleanup()

    def test_defaults(self):
        cfg = ExperimentConfig()
        self.assertEqual(cfg.n, 300)
        self.assertEqual(cfg.m, 100)
        self.assertEqual(cfg.grid, "desk")

    def test_from_toml(self):
        path = self.root / "experiment.toml"
        path.write_text(
            '[experiment]\nsettings = ["a1-l", "a3-hx"]\nmethods = ["isomap"]\nn = 50\n\n'
            "[grid_overrides.isomap]\nk = [5, 10]\n"
        )
        cfg = ExperimentConfig.from_toml(str(path), n=60, seed=None)
        self.assertEqual(cfg.settings, ["a1-l", "a3-hx"])
        self.assertEqual(cfg.n, 60)
        self.assertEqual(cfg.seed, 1)
        self.assertEqual(cfg.grid_overrides, {"isomap": {"k": [5, 10]}})

    def test_validation(self):
        for bad in (
            dict(methods=["lle"]),
            dict(settings=["z9-q"]),
            dict(metrics=[]),
            dict(n=5),
            dict(n=40, geodesic_k=40),
            dict(grid="huge"),
            dict(q_on="auc"),
            dict(grid_overrides={"lle": {"k": [3]}}),
            dict(unknown_field=1),
        ):
            with self.assertRaises(ValidationError):
                ExperimentConfig(**bad)


if __name__ == "__main__":
    unittest.main()
