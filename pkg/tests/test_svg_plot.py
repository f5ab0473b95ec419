import xml.etree.ElementTree as ET

import pytest

from src.errors import DataError
from src.svg_plot import LinePlot, SvgCanvas

SVG_NS = "{http://www.w3.org/2000/svg}"


class TestSvgCanvas:
    def test_document_is_well_formed(self):
        canvas = SvgCanvas(200, 100)
        canvas.fill_rect(0, 0, 200, 100, "#FFFFFF")
        canvas.draw_text(10, 20, "a < b & c")
        root = ET.fromstring(canvas.to_svg())
        assert root.tag == SVG_NS + "svg"
        assert root.get("width") == "200"
        assert root.find(SVG_NS + "text").text == "a < b & c"

    def test_save_creates_directories(self, tmp_path):
        path = tmp_path / "nested" / "plot.svg"
        SvgCanvas().save(str(path))
        assert path.read_text(encoding="utf-8").startswith("<svg")


class TestLinePlot:
    def test_one_polyline_per_series(self, tmp_path):
        plot = LinePlot("N_sigma by rank", "rank", "rho")
        plot.add_series("original", [0, 1, 2], [1.0, 0.5, 0.25])
        plot.add_series("adversarial", [0, 1, 2], [1.0, 0.8, 0.6])
        path = tmp_path / "plot.svg"
        plot.save(str(path))
        root = ET.parse(str(path)).getroot()
        polylines = root.findall(SVG_NS + "polyline")
        assert len(polylines) == 2
        assert all(len(p.get("points").split()) == 3 for p in polylines)
        texts = [t.text for t in root.findall(SVG_NS + "text")]
        assert "N_sigma by rank" in texts and "original" in texts and "adversarial" in texts

    def test_constant_series_still_renders(self):
        plot = LinePlot("flat", "x", "y")
        plot.add_series("s", [3.0], [2.0])
        canvas = plot.render()
        assert "nan" not in canvas.to_svg()

    def test_points_stay_inside_canvas(self):
        plot = LinePlot("t", "x", "y", width=300, height=200)
        plot.add_series("s", [-5, 0, 5], [-1.0, 4.0, 2.0])
        root = ET.fromstring(plot.render().to_svg())
        for pair in root.find(SVG_NS + "polyline").get("points").split():
            x, y = (float(v) for v in pair.split(","))
            assert 0 <= x <= 300 and 0 <= y <= 200

    def test_empty_plot(self):
        with pytest.raises(DataError):
            LinePlot("t", "x", "y").render()

    def test_mismatched_series(self):
        with pytest.raises(DataError):
            LinePlot("t", "x", "y").add_series("s", [1, 2], [1.0])
