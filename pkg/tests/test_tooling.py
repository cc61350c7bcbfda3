import tempfile
import unittest
from pathlib import Path
from xml.etree import ElementTree

import numpy as np
import pandas as pd

from fnmanifold.distance import pairwise_direct
from fnmanifold.embed import Embedding, IsomapParams, MDSParams, isomap
from fnmanifold.plotting import render_scatter_svg
from fnmanifold.synthdata import generate_setting, sample_linear_params
from fnmanifold.tooling import (
    DatasetFormatError,
    load_color_csv,
    load_dataset_csv,
    load_embedding,
    load_matrix_csv,
    load_params_csv,
    read_json,
    save_dataset_csv,
    save_embedding,
    save_matrix_csv,
    save_params_csv,
    trim_memory,
    write_json,
)


SVG_NS = "{http://www.w3.org/2000/svg}"


def marker_count(path):
    """Scatter markers in a saved SVG, drawn either as <use> references or inline <path> elements."""

    def count(element):
        total = 0
        for child in element:
            if child.tag == SVG_NS + "defs":
                continue
            if child.tag in (SVG_NS + "use", SVG_NS + "path"):
                total += 1
            total += count(child)
        return total

    root = ElementTree.parse(path).getroot()
    groups = [g for g in root.iter(SVG_NS + "g") if g.get("id", "").startswith("PathCollection")]
    return sum(count(g) for g in groups)


class TestCsvFormats(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.root = Path(self.temp_dir.name)

    def tearDown(self):
        self.temp_dir.cleanup()

    def write(self, name, text):
        path = self.root / name
        path.write_text(text)
        return str(path)

    def test_dataset_roundtrip(self):
        data, _ = generate_setting("p2-l", n=10, m=15, seed=2)
        path = str(self.root / "data.csv")
        save_dataset_csv(data, path)
        loaded = load_dataset_csv(path)
        np.testing.assert_array_equal(loaded.grid, data.grid)
        np.testing.assert_array_equal(loaded.values, data.values)
        self.assertEqual(loaded.provenance, "external")

    def test_non_numeric_cell(self):
        path = self.write("bad.csv", "0,0.5,1\n1,2,3\n1,abc,2\n4,5,6\n")
        with self.assertRaises(DatasetFormatError) as ctx:
            load_dataset_csv(path)
        self.assertEqual((ctx.exception.line, ctx.exception.column), (3, 2))

    def test_non_finite_cell(self):
        path = self.write("nan.csv", "0,0.5,1\n1,2,3\n1,nan,2\n4,5,6\n")
        with self.assertRaises(DatasetFormatError):
            load_dataset_csv(path)

    def test_ragged_row(self):
        path = self.write("ragged.csv", "0,0.5,1\n1,2,3\n1,2\n4,5,6\n")
        with self.assertRaises(DatasetFormatError) as ctx:
            load_dataset_csv(path)
        self.assertEqual(ctx.exception.line, 3)

    def test_duplicate_grid_value(self):
        path = self.write("dup.csv", "0,0.5,0.5,1\n1,2,3,4\n1,2,3,4\n4,5,6,7\n")
        with self.assertRaises(DatasetFormatError) as ctx:
            load_dataset_csv(path)
        self.assertEqual((ctx.exception.line, ctx.exception.column), (1, 3))

    def test_decreasing_grid(self):
        path = self.write("dec.csv", "0,0.7,0.5,1\n1,2,3,4\n1,2,3,4\n4,5,6,7\n")
        with self.assertRaises(DatasetFormatError) as ctx:
            load_dataset_csv(path)
        self.assertEqual(ctx.exception.column, 3)

    def test_grid_is_rescaled(self):
        path = self.write("wide.csv", "10,20,30\n1,2,3\n4,5,6\n7,8,9\n")
        data = load_dataset_csv(path)
        np.testing.assert_allclose(data.grid, [0.0, 0.5, 1.0])
        self.assertEqual(data.values.shape, (3, 3))

    def test_without_grid_row(self):
        path = self.write("plain.csv", "1,2,3,4\n4,5,6,7\n7,8,9,10\n")
        data = load_dataset_csv(path, grid_row=False)
        np.testing.assert_allclose(data.grid, np.linspace(0, 1, 4))
        self.assertEqual(data.n, 3)

    def test_empty_file(self):
        path = self.write("empty.csv", "\n\n")
        with self.assertRaises(DatasetFormatError):
            load_dataset_csv(path)

    def test_params_roundtrip(self):
        params = sample_linear_params("i2-l", 12, seed=3)
        path = str(self.root / "params.csv")
        save_params_csv(params, path)
        loaded = load_params_csv(path)
        np.testing.assert_array_equal(loaded.values, params.values)
        self.assertEqual(loaded.active_params, params.active_params)

    def test_color_column(self):
        path = str(self.root / "color.csv")
        pd.DataFrame({"u": [0.1, 0.2, 0.3], "v": [1.0, 2.0, 3.0]}).to_csv(path, index=False)
        np.testing.assert_array_equal(load_color_csv(path), [0.1, 0.2, 0.3])
        np.testing.assert_array_equal(load_color_csv(path, "v"), [1.0, 2.0, 3.0])
        with self.assertRaises(ValueError):
            load_color_csv(path, "w")

    def test_matrix_roundtrip(self):
        d = pairwise_direct(np.random.default_rng(4).normal(size=(9, 3)))
        path = str(self.root / "d.csv")
        save_matrix_csv(d, path)
        loaded = load_matrix_csv(path)
        np.testing.assert_array_equal(loaded.d, d.d)
        self.assertEqual(loaded.metric, "direct")

    def test_embedding_roundtrip(self):
        emb = isomap(pairwise_direct(np.random.default_rng(5).normal(size=(20, 3))), k=5, ndim=2)
        path = str(self.root / "emb.csv")
        save_embedding(emb, path)
        self.assertTrue((self.root / "emb.json").exists())
        loaded = load_embedding(path)
        np.testing.assert_array_equal(loaded.coords, emb.coords)
        self.assertEqual(loaded.hyper, IsomapParams(k=5, ndim=2))
        self.assertEqual(read_json(str(self.root / "emb.json"))["hyper"], {"k": 5, "ndim": 2})

    def test_bare_embedding_is_mds(self):
        path = str(self.root / "bare.csv")
        save_matrix_csv(np.random.default_rng(6).normal(size=(8, 3)), path)
        loaded = load_embedding(path)
        self.assertEqual(loaded.method, "mds")
        self.assertEqual(loaded.hyper, MDSParams(k=3))

    def test_json_is_sorted_and_stable(self):
        path = str(self.root / "x.json")
        write_json({"b": 1, "a": np.arange(2)}, path)
        first = Path(path).read_bytes()
        write_json({"a": np.arange(2), "b": 1}, path)
        self.assertEqual(Path(path).read_bytes(), first)
        self.assertLess(first.index(b'"a"'), first.index(b'"b"'))

    def test_trim_memory(self):
        self.assertGreaterEqual(trim_memory(), 0)


class TestScatterSvg(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.root = Path(self.temp_dir.name)
        rng = np.random.default_rng(7)
        self.emb = Embedding(rng.normal(size=(50, 3)), "isomap", IsomapParams(k=5, ndim=3))
        self.color = rng.uniform(0.5, 3.0, 50)

    def tearDown(self):
        self.temp_dir.cleanup()

    def test_output_is_deterministic(self):
        first = render_scatter_svg(self.emb, self.color, str(self.root / "a.svg"), title="a3-hx/isomap")
        second = render_scatter_svg(self.emb, self.color, str(self.root / "b.svg"), title="a3-hx/isomap")
        content = Path(first).read_bytes()
        self.assertEqual(content, Path(second).read_bytes())
        self.assertIn(b"<svg", content)
        self.assertIn(b"a3-hx/isomap", content)

    def test_single_point(self):
        emb = Embedding(np.zeros((1, 2)), "mds", MDSParams(k=2))
        path = render_scatter_svg(emb, None, str(self.root / "one.svg"))
        self.assertEqual(marker_count(path), 1)

    def test_large_embedding_is_well_formed(self):
        rng = np.random.default_rng(8)
        emb = Embedding(rng.normal(size=(1000, 3)), "isomap", IsomapParams(k=5, ndim=3))
        path = render_scatter_svg(emb, rng.uniform(size=1000), str(self.root / "large.svg"))
        root = ElementTree.parse(path).getroot()
        self.assertEqual(root.tag, SVG_NS + "svg")
        # one marker per point in each of the two projections
        self.assertEqual(marker_count(path), 2000)

    def test_invalid_inputs(self):
        line = Embedding(np.zeros((5, 1)), "mds", MDSParams(k=1))
        with self.assertRaises(ValueError):
            render_scatter_svg(line, None, str(self.root / "line.svg"))
        with self.assertRaises(ValueError):
            render_scatter_svg(self.emb, self.color[:10], str(self.root / "short.svg"))


if __name__ == "__main__":
    unittest.main()
