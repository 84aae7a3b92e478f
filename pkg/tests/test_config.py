from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import pytest

from conftest import DATA, FIXTURES
from mnsim.config import (
    ConfigValidationError,
    antennas_to_element,
    canonical_bytes,
    parse_antennas_config,
    parse_map,
    parse_persons_config,
    parse_simulation_config,
    persons_to_element,
    simulation_to_element,
    update_config,
    validate_config,
    write_document,
)
from mnsim.mobility import HomeWorkManhattan, RandomWalkClosedMap
from mnsim.schema import DocumentParseError, parse_document

MANHATTAN = {
    "manhattan_grid": {
        "@type": "home_work_manhattan",
        "x_step": 40,
        "y_step": 40,
        "x_origin": 0,
        "y_origin": 0,
    }
}


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def _shipped_text(name: str) -> str:
    return (DATA / name).read_text(encoding="utf-8")


# -- validate_config ----------------------------------------------------------


@pytest.mark.parametrize(
    "doc,schema",
    [
        ("simulation.xml", "simulation_rules"),
        ("persons.xml", "persons_rules"),
        ("antennas.xml", "antennas_rules"),
        ("map.xml", "map_rules"),
    ],
)
def test_shipped_documents_are_valid(doc, schema):
    report = validate_config(DATA / doc, schema)
    assert report.is_valid, report.issues
    assert report.issues == ()


def test_minimal_document_is_valid(tmp_path):
    doc = _write(
        tmp_path / "min.xml",
        """<simulation>
  <start_time>0</start_time><end_time>5</end_time>
  <prob_0_devices>0</prob_0_devices><prob_1_devices>1</prob_1_devices><prob_2_devices>0</prob_2_devices>
  <mno><mno_id>1</mno_id><mno_name>A</mno_name></mno>
  <movement_pattern><home_work/></movement_pattern>
</simulation>""",
    )
    assert validate_config(doc, "simulation_rules").is_valid


def test_missing_end_time_gives_one_issue(tmp_path):
    text = _shipped_text("simulation.xml").replace("  <end_time>10</end_time>\n", "")
    report = validate_config(_write(tmp_path / "s.xml", text), "simulation_rules")
    assert not report.is_valid
    assert len(report.issues) == 1
    assert report.issues[0].rule == "required"
    assert "end_time" in report.issues[0].path


def test_probability_sum_rule_is_cited(tmp_path):
    # 0.3 + 0.7 + 0.2 = 1.2, each value individually in range
    text = _shipped_text("simulation.xml").replace("<prob_0_devices>0.1<", "<prob_0_devices>0.3<")
    report = validate_config(_write(tmp_path / "s.xml", text), "simulation_rules")
    assert not report.is_valid
    assert report.rules == {"probability_sum"}
    assert "1.2" in report.issues[0].message


def test_probability_sum_tolerance(tmp_path):
    text = _shipped_text("simulation.xml").replace("<prob_0_devices>0.1<", "<prob_0_devices>0.1000000001<")
    assert validate_config(_write(tmp_path / "s.xml", text), "simulation_rules").is_valid


def test_validation_does_not_mutate_and_is_pure(tmp_path):
    doc = FIXTURES / "invalid" / "sim_probability_out_of_range.xml"
    before = doc.read_bytes()
    first = validate_config(doc, "simulation_rules")
    second = validate_config(doc, "simulation_rules")
    assert first == second
    assert doc.read_bytes() == before


def test_malformed_markup_is_a_parse_error(tmp_path):
    doc = _write(tmp_path / "bad.xml", "<simulation><start_time>0</simulation>")
    with pytest.raises(DocumentParseError):
        validate_config(doc, "simulation_rules")


def test_external_entities_are_refused(tmp_path):
    doc = _write(
        tmp_path / "xxe.xml",
        '<!DOCTYPE s [<!ENTITY e SYSTEM "file:///etc/passwd">]><simulation>&e;</simulation>',
    )
    with pytest.raises(DocumentParseError):
        validate_config(doc, "simulation_rules")


def test_unreadable_file_is_an_io_error(tmp_path):
    with pytest.raises(OSError):
        validate_config(tmp_path / "nope.xml", "simulation_rules")


def test_wrong_root(tmp_path):
    report = validate_config(DATA / "persons.xml", "simulation_rules")
    assert report.rules == {"root"}


def test_schema_by_path(tmp_path):
    rules = Path(__file__).parents[1] / "src" / "mnsim" / "data" / "schemas" / "persons_rules.xml"
    assert validate_config(DATA / "persons.xml", rules).is_valid


def test_invalid_corpus_expectations():
    expected = json.loads((FIXTURES / "invalid" / "expected.json").read_text())
    for name, exp in expected.items():
        report = validate_config(FIXTURES / "invalid" / name, exp["schema"])
        assert not report.is_valid, name
        assert exp["rule"] in report.rules, (name, report.issues)


# -- parsing ------------------------------------------------------------------


def test_parse_simulation_shipped():
    cfg = parse_simulation_config(DATA / "simulation.xml")
    assert (cfg.start_time, cfg.end_time, cfg.time_increment, cfg.random_seed) == (0, 10, 1, 123)
    assert cfg.prob_devices == (0.1, 0.7, 0.2)
    assert cfg.movement_pattern == RandomWalkClosedMap()
    assert [(m.mno_id, m.mno_name, m.tech) for m in cfg.mno_list] == [(1, "MNO1", "4G")]


def test_parse_end_time_eleven(tmp_path):
    text = _shipped_text("simulation.xml").replace("<end_time>10<", "<end_time>11<")
    assert parse_simulation_config(_write(tmp_path / "s.xml", text)).end_time == 11


def test_parse_seed_default(tmp_path):
    text = _shipped_text("simulation.xml").replace("  <random_seed>123</random_seed>\n", "")
    text = text.replace("  <time_increment>1</time_increment>\n", "")
    cfg = parse_simulation_config(_write(tmp_path / "s.xml", text))
    assert cfg.random_seed == 0
    assert cfg.time_increment == 1


def test_parse_manhattan(tmp_path):
    out = tmp_path / "s.xml"
    update_config(DATA / "simulation.xml", {"movement_pattern": MANHATTAN}, "simulation_rules", out)
    cfg = parse_simulation_config(out)
    assert cfg.movement_pattern == HomeWorkManhattan(x_step=40, y_step=40, x_origin=0, y_origin=0)


def test_parse_invalid_raises_with_report():
    with pytest.raises(ConfigValidationError) as info:
        parse_simulation_config(FIXTURES / "invalid" / "sim_missing_end_time.xml")
    assert info.value.report.rules == {"required"}


def test_parse_persons_defaults(tmp_path):
    cfg = parse_persons_config(DATA / "persons.xml")
    assert cfg.num_persons == 20 and cfg.speed_walk == 1.4 and cfg.prob_car == 0.2
    text = _shipped_text("persons.xml").replace("  <prob_car>0.2</prob_car>\n", "")
    assert parse_persons_config(_write(tmp_path / "p.xml", text)).prob_car == 0.0


def test_parse_antennas_full_fixture():
    antennas = parse_antennas_config(DATA / "antennas.xml")
    assert [a.antenna_id for a in antennas] == [1, 2, 3]
    first = antennas[0]
    assert first.cell_type == "omnidirectional"
    assert first.azimuth_deg is None
    assert first.tilt_deg == 0.0 and first.elevation_m == 0.0
    assert first.beam_h_deg == 360.0


def test_directional_antenna_round_trips(tmp_path):
    antennas = parse_antennas_config(DATA / "antennas.xml")
    sector = replace(antennas[1], azimuth_deg=90.0)
    path = tmp_path / "a.xml"
    write_document(antennas_to_element([sector]), path)
    (back,) = parse_antennas_config(path)
    assert back == sector
    assert back.cell_type == "directional_120" and back.azimuth_deg == 90.0 and back.beam_h_deg == 120.0


def test_negative_power_rejected():
    with pytest.raises(ConfigValidationError) as info:
        parse_antennas_config(FIXTURES / "invalid" / "antennas_negative_power.xml")
    assert "range" in info.value.report.rules


def test_parse_map():
    spec = parse_map(DATA / "map.wkt", DATA / "map.xml")
    assert spec.crs_code == 2062
    assert (spec.tile_dim_x, spec.tile_dim_y) == (40.0, 40.0)
    assert [s.long_name for s in spec.subregions] == ["West", "North-East", "South-East"]
    assert spec.boundary.area == 160_000.0


def test_parse_map_subregion_outside_envelope(tmp_path):
    text = _shipped_text("map.xml").replace("POLYGON ((0 0, 200 0", "POLYGON ((-50 0, 200 0").replace(
        "200 400, 0 400, 0 0))", "200 400, -50 400, -50 0))", 1
    )
    with pytest.raises(ConfigValidationError) as info:
        parse_map(DATA / "map.wkt", _write(tmp_path / "m.xml", text))
    assert info.value.report.rules == {"within_boundary"}


def test_parse_map_bad_boundary(tmp_path):
    wkt = _write(tmp_path / "m.wkt", "POLYGON ((0 0, 400 400, 400 0, 0 400, 0 0))")
    with pytest.raises(ConfigValidationError):
        parse_map(wkt, DATA / "map.xml")
    with pytest.raises(ConfigValidationError):
        parse_map(_write(tmp_path / "x.wkt", "POINT (1 2)"), DATA / "map.xml")


# -- round trips --------------------------------------------------------------


@pytest.mark.parametrize(
    "name,parse,serialize",
    [
        ("simulation.xml", parse_simulation_config, simulation_to_element),
        ("persons.xml", parse_persons_config, persons_to_element),
        ("antennas.xml", parse_antennas_config, antennas_to_element),
    ],
)
def test_parse_serialize_round_trip(tmp_path, name, parse, serialize):
    first = parse(DATA / name)
    out = tmp_path / name
    write_document(serialize(first), out)
    assert parse(out) == first


def test_round_trip_manhattan(tmp_path):
    out = tmp_path / "s.xml"
    update_config(DATA / "simulation.xml", {"movement_pattern": MANHATTAN}, "simulation_rules", out)
    cfg = parse_simulation_config(out)
    again = tmp_path / "again.xml"
    write_document(simulation_to_element(cfg), again)
    assert parse_simulation_config(again) == cfg


# -- update_config ------------------------------------------------------------


def test_update_end_time(tmp_path):
    out = tmp_path / "new.xml"
    before = (DATA / "simulation.xml").read_bytes()
    report = update_config(DATA / "simulation.xml", {"end_time": 11}, "simulation_rules", out)
    assert report.is_valid
    assert parse_simulation_config(out).end_time == 11
    assert (DATA / "simulation.xml").read_bytes() == before


def test_update_identity_is_canonical(tmp_path):
    out = tmp_path / "same.xml"
    update_config(DATA / "simulation.xml", {}, "simulation_rules", out)
    assert out.read_bytes() == canonical_bytes(parse_document(DATA / "simulation.xml"))


def test_update_replaces_movement_subtree(tmp_path):
    out = tmp_path / "new.xml"
    update_config(DATA / "simulation.xml", {"end_time": 11, "movement_pattern": MANHATTAN}, "simulation_rules", out)
    root = parse_document(out).getroot()
    mp = root.find("movement_pattern")
    assert [c.tag for c in mp] == ["manhattan_grid"]
    grid = mp.find("manhattan_grid")
    assert grid.get("type") == "home_work_manhattan"
    assert {c.tag: c.text for c in grid} == {"x_step": "40", "y_step": "40", "x_origin": "0", "y_origin": "0"}


def test_update_inserts_missing_element_in_schema_order(tmp_path):
    src = _write(
        tmp_path / "s.xml",
        _shipped_text("simulation.xml").replace("  <random_seed>123</random_seed>\n", ""),
    )
    out = tmp_path / "new.xml"
    update_config(src, {"random_seed": 7}, "simulation_rules", out)
    tags = [c.tag for c in parse_document(out).getroot()]
    assert tags.index("random_seed") == tags.index("time_increment") + 1
    assert parse_simulation_config(out).random_seed == 7


def test_invalid_update_writes_nothing(tmp_path):
    out = tmp_path / "new.xml"
    with pytest.raises(ConfigValidationError) as info:
        update_config(DATA / "simulation.xml", {"end_time": -3}, "simulation_rules", out)
    assert "range" in info.value.report.rules
    assert not out.exists()


@pytest.mark.parametrize(
    "overrides,field,value",
    [
        ({"end_time": 11}, "end_time", 11),
        ({"start_time": 2}, "start_time", 2),
        ({"random_seed": 99}, "random_seed", 99),
        ({"time_increment": 2}, "time_increment", 2),
    ],
)
def test_update_then_parse_matches_in_memory_assignment(tmp_path, overrides, field, value):
    out = tmp_path / "new.xml"
    update_config(DATA / "simulation.xml", overrides, "simulation_rules", out)
    expected = replace(parse_simulation_config(DATA / "simulation.xml"), **{field: value})
    assert parse_simulation_config(out) == expected


def test_update_persons_scalar(tmp_path):
    out = tmp_path / "p.xml"
    update_config(DATA / "persons.xml", {"num_persons": 5, "speed_car": 20.5}, "persons_rules", out)
    expected = replace(parse_persons_config(DATA / "persons.xml"), num_persons=5, speed_car=20.5)
    assert parse_persons_config(out) == expected
