"""
Reference embedding-quality numbers on the full protocol. They take minutes to an hour,
so they only run with FNMR_ACCEPTANCE=1 (FNMR_WORKERS sets the dask worker count).
"""

import os
import tempfile
import unittest

from scipy.stats import spearmanr

from fnmanifold.distance import pairwise_direct
from fnmanifold.embed import fit_embedding, mds
from fnmanifold.experiment import DELTA_SETTINGS, ExperimentConfig, delta_report, run_experiment
from fnmanifold.quality import evaluate_embedding
from fnmanifold.synthdata import generate_setting
from fnmanifold.tune import default_grid, grid_search

ACCEPTANCE = os.environ.get("FNMR_ACCEPTANCE") == "1"
WORKERS = int(os.environ.get("FNMR_WORKERS", "1"))


@unittest.skipUnless(ACCEPTANCE, "set FNMR_ACCEPTANCE=1 to run the replication suite")
class TestReferenceNumbers(unittest.TestCase):

    def test_mds_on_helix(self):
        data, params = generate_setting("a3-hx", n=1000, m=200, seed=1)
        fs = pairwise_direct(data.values)
        ps = pairwise_direct(params.values, space="parameter")
        emb = mds(fs, 5)
        self.assertGreaterEqual(evaluate_embedding(fs, emb, m="dir").auc, 0.95)
        self.assertAlmostEqual(evaluate_embedding(ps, emb, m="dir").auc, 0.78, delta=0.06)
        self.assertAlmostEqual(evaluate_embedding(ps, emb, m="geo", geodesic_k=10).auc, 0.553, delta=0.06)

    def test_isomap_on_linear_settings(self):
        for setting in ("a1-l", "c1-l"):
            data, params = generate_setting(setting, n=300, m=100, seed=1)
            fs = pairwise_direct(data.values)
            ps = pairwise_direct(params.values, space="parameter")
            grid = default_grid("isomap", fs.n, preset="desk")
            result = grid_search("isomap", fs, ps, objective="auc", m="geo", grid=grid, workers=WORKERS)
            self.assertGreaterEqual(result.best_score, 0.9, setting)
            emb = fit_embedding(fs, result.best_hyper, seed=result.best_seed)
            rho = spearmanr(emb.coords[:, 0], params.values[:, 0])[0]
            self.assertGreaterEqual(abs(rho), 0.99, setting)

    def test_helix_ordering_in_desk_protocol(self):
        with tempfile.TemporaryDirectory() as output:
            cfg = ExperimentConfig(
                settings=["a1-l", "a3-hx"],
                methods=["mds", "isomap"],
                metrics=["dir"],
                spaces=["function"],
                workers=WORKERS,
                output=output,
            )
            records = run_experiment(cfg)
        self.assertFalse(any(record.failed for record in records))
        (helix,) = [r for r in records if r.setting == "a3-hx" and r.method == "mds"]
        self.assertGreater(helix.reports["function-dir"].auc, helix.reports["parameter-geo"].auc)

    def test_delta_ordering(self):
        with tempfile.TemporaryDirectory() as output:
            cfg = ExperimentConfig(
                settings=list(DELTA_SETTINGS),
                methods=["isomap", "tsne"],
                metrics=["dir", "geo"],
                spaces=["function", "parameter"],
                workers=WORKERS,
                output=output,
            )
            records = run_experiment(cfg)
        direct = delta_report(records, "dir").set_index("method")
        geo = delta_report(records, "geo").set_index("method")
        for method in ("isomap", "tsne"):
            self.assertLess(geo.loc[method, "delta"], direct.loc[method, "delta"], method)


if __name__ == "__main__":
    unittest.main()
