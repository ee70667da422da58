import re
import xml.etree.ElementTree as ET

from blendnet import svg


def _parse(doc):
    return ET.fromstring(doc)


def test_line_chart_is_valid_xml_with_points_and_rule():
    doc = svg.line_chart({"a": ([0, 0.5, 1], [1.0, 2.0, 1.5]), "b": ([0, 1], [0.0, 3.0])}, "t", "x", "y", hline=1.2)
    root = _parse(doc)
    assert root.tag.endswith("svg")
    assert len(re.findall(r'class="point"', doc)) == 5
    assert len(re.findall(r'class="criterion"', doc)) == 1
    assert doc.count("<polyline") == 2


def test_line_chart_without_markers_or_rule():
    doc = svg.line_chart({"a": ([0, 1], [2.0, 2.0])}, markers=False)
    _parse(doc)
    assert 'class="point"' not in doc and 'class="criterion"' not in doc


def test_strip_chart_is_deterministic():
    groups = {"first": [0.1, -0.2, 0.3], "composition": [0.05]}
    a, b = svg.strip_chart(groups, "phi"), svg.strip_chart(groups, "phi")
    assert a == b
    _parse(a)
    assert a.count("<circle") == 4
