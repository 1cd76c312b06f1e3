from __future__ import annotations

import pytest

from fslab.config import RunManifest, dumps, load_config
from fslab.errors import ValidationError

REF = "configs/reference.ini"


def test_defaults_and_reference_load():
    d = load_config()
    assert d["audit.r_list"] == [1.0, 2.0] and d["audit.theta"] is None
    ref = load_config(REF)
    assert ref.grid.points == 128 and ref.frac.s == 0.25 and ref["subcritical.domain"] == "disk:0,0,0.5"


def test_roundtrip_is_fixed_point(tmp_path):
    a = load_config(REF, ["frac.s=0.3", "audit.theta=0.7"])
    a.save(tmp_path / "a.ini")
    b = load_config(tmp_path / "a.ini")
    assert b.canonical() == a.canonical() and b.hash() == a.hash()
    b.save(tmp_path / "b.ini")
    assert (tmp_path / "a.ini").read_bytes() == (tmp_path / "b.ini").read_bytes()


def test_hash_is_content_based():
    assert load_config(REF).hash() == load_config(REF).hash()
    assert load_config(REF, ["corpus.seed=8"]).hash() != load_config(REF).hash()


@pytest.mark.parametrize(
    "override,match",
    [
        ("frac.s=1.0", r"\[frac\] s: fractional order must satisfy 0 < s < N/2"),
        ("grid.bogus=1", r"\[grid\] bogus: unknown key"),
        ("nosuch.key=1", r"unknown section"),
        ("grid.points_M=100", r"\[grid\] points_M"),
        ("grid.points_M=abc", r"cannot parse"),
        ("audit.theta=1.0", r"\[audit\] theta"),
        ("audit.r_list=", r"r_list must not be empty"),
        ("profiles.max_profiles=9", r"max_profiles"),
        ("subcritical.eps_list=0.1, 0.4", r"strictly decreasing"),
        ("subcritical.domain=disk:0,0,0.9", r"clear of the box faces"),
        ("frac.s=nan", r"cannot parse"),
    ],
)
def test_invalid_configs_name_the_key(override, match):
    with pytest.raises(ValidationError, match=match):
        load_config(REF, [override])


def test_malformed_files(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("no section header\n")
    with pytest.raises(ValidationError, match="malformed"):
        load_config(bad)
    with pytest.raises(ValidationError, match="cannot read"):
        load_config(tmp_path / "missing.ini")
    with pytest.raises(ValidationError, match="section.key=value"):
        load_config(None, ["novalue"])


def test_dumps_precision_and_manifest(tmp_path):
    assert dumps({"x": 0.1, "y": [1, float("inf")], "b": True}) == '{\n  "x": 0.10000000000000001,\n  "y": [\n    1,\n    null\n  ],\n  "b": true\n}\n'
    m = RunManifest("abc", "1.0.0")
    m.add("cmd", ["cmd/b", "cmd/a"], 0.5)
    assert m.files == ["cmd/a", "cmd/b"]
    m.write(tmp_path / "m.json")
    assert '"config_hash": "abc"' in (tmp_path / "m.json").read_text()
