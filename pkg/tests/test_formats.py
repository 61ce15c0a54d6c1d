"""BitStream container and canonical artifact writers."""

from __future__ import annotations

import json
import os

import numpy as np
import pytest

from cqrn import formats


def test_bitstream_roundtrip_bytes():
    rng = np.random.default_rng(1)
    bits = formats.BitStream(rng.integers(0, 2, 77, dtype=np.uint8))
    again = formats.BitStream.from_bytes(bits.to_bytes())
    assert bits == again
    assert len(again) == 77


def test_bitstream_header_layout():
    bits = formats.BitStream(np.array([1, 0, 1], dtype=np.uint8))
    raw = bits.to_bytes()
    assert raw[:4] == b"CQRN"
    assert raw[4] == 1
    assert int.from_bytes(raw[5:13], "little") == 3
    # MSB-first packing: 101 -> 0b10100000
    assert raw[13] == 0b10100000


def test_bitstream_rejects_bad_magic_and_version():
    bits = formats.BitStream(np.array([1, 1], dtype=np.uint8))
    raw = bytearray(bits.to_bytes())
    raw[0] = ord("X")
    with pytest.raises(ValueError):
        formats.BitStream.from_bytes(bytes(raw))
    raw = bytearray(bits.to_bytes())
    raw[4] = 9
    with pytest.raises(ValueError):
        formats.BitStream.from_bytes(bytes(raw))


def test_bitstream_rejects_truncated_payload():
    bits = formats.BitStream(np.ones(64, dtype=np.uint8))
    raw = bits.to_bytes()[:-2]
    with pytest.raises(ValueError):
        formats.BitStream.from_bytes(raw)


def test_bitstream_rejects_nonbinary_values():
    with pytest.raises(ValueError):
        formats.BitStream(np.array([0, 2, 1], dtype=np.uint8))


def test_bitstream_file_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    bits = formats.BitStream(rng.integers(0, 2, 1000, dtype=np.uint8))
    path = tmp_path / "stream.bin"
    bits.write(path)
    assert formats.BitStream.read(path) == bits


def test_empty_bitstream_roundtrip():
    empty = formats.BitStream(np.zeros(0, dtype=np.uint8))
    assert formats.BitStream.from_bytes(empty.to_bytes()) == empty
    assert empty.ones_fraction() == 0.0


def test_concat_preserves_order():
    a = formats.BitStream(np.array([1, 1, 0], dtype=np.uint8))
    b = formats.BitStream(np.array([0, 1], dtype=np.uint8))
    assert list(a.concat(b).bits) == [1, 1, 0, 0, 1]


def test_canonical_json_is_sorted_and_stable():
    s1 = formats.canonical_json({"b": 1, "a": [1.5, 2]})
    s2 = formats.canonical_json({"a": [1.5, 2], "b": 1})
    assert s1 == s2
    assert s1 == '{"a":[1.5,2],"b":1}\n'


def test_canonical_json_rejects_nan():
    with pytest.raises(ValueError):
        formats.canonical_json({"x": float("nan")})


def test_atomic_write_replaces_not_appends(tmp_path):
    path = tmp_path / "out.json"
    formats.write_json(path, {"v": 1})
    formats.write_json(path, {"v": 2})
    assert json.loads(path.read_text()) == {"v": 2}
    leftovers = [p for p in os.listdir(tmp_path) if p.startswith(".tmp-")]
    assert leftovers == []


def test_write_jsonl_one_record_per_line(tmp_path):
    path = tmp_path / "events.jsonl"
    formats.write_jsonl(path, [{"i": 0}, {"i": 1}])
    lines = path.read_text().splitlines()
    assert [json.loads(x)["i"] for x in lines] == [0, 1]


def test_write_csv_validates_width(tmp_path):
    path = tmp_path / "t.csv"
    formats.write_csv(path, ["a", "b"], [["1", "2"]])
    assert path.read_text() == "a,b\n1,2\n"
    with pytest.raises(ValueError):
        formats.write_csv(path, ["a", "b"], [["1"]])
