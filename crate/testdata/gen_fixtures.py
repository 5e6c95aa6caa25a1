"""Write golden byte fixtures for the ICSP and worker-protocol frames.

Built with struct only, independent of the Rust codec. Run from this
directory: python3 gen_fixtures.py
"""

import struct
from pathlib import Path

OUT = Path(__file__).parent / "golden"


def frame(msg_id, payload):
    return struct.pack("<IH", 2 + len(payload), msg_id) + payload


def vec3(v):
    return struct.pack("<3f", *v)


def meta(pairs):
    return "".join(f"{k}={v}\n" for k, v in pairs).encode()


def readout():
    head = struct.pack("<HQIHHHHHHHHI", 1, 0b110, 42, 3, 2, 7, 1, 4, 0, 0, 0, 123_456_000)
    head += vec3((1.5, -2.0, 30.0)) + vec3((1, 0, 0)) + vec3((0, 1, 0)) + vec3((0, 0, 1))
    assert len(head) == 82
    samples = [(0.5, -0.25), (1.0, 0.0), (-3.0, 2.5), (0.0, 1.0), (0.125, 0.0), (2.0, -1.0)]
    return head + b"".join(struct.pack("<2f", re, im) for re, im in samples)


def image():
    rows, cols = 2, 3
    head = struct.pack("<HQHHHHHH", 1, 1, 2, 5, 9, rows, cols, 3)
    head += struct.pack("<5f", 1.25, 1.25, 8.0, 10.0, 412.5)
    head += vec3((-10.0, 20.0, -5.0)) + vec3((0, 1, 0)) + vec3((1, 0, 0))
    assert len(head) == 78
    m = meta([("role", "ground_truth"), ("landmark", "mv1"), ("landmark", "mv2")])
    pixels = struct.pack(f"<{rows * cols}H", 0, 1, 2, 1, 0, 65535)
    return head + struct.pack("<I", len(m)) + m + pixels


def waveform():
    s = [0.0, 0.5, 1.0, -0.25]
    return struct.pack("<HIf", 1, len(s), 2.5) + struct.pack(f"<{len(s)}f", *s)


ICSP = {
    "config_name": (1, b"sax"),
    "config_inline": (2, b"[chain]\ngadgets = recon\n"),
    "session_header": (3, meta([("heart_rate_bpm", "68"), ("bsa_m2", "1.8"), ("patient_key", "p1"), ("scan_kind", "sax")])),
    "close": (4, b""),
    "text": (5, b"ok"),
    "acquisition": (10, readout()),
    "image": (11, image()),
    "waveform": (12, waveform()),
    "report": (13, '{"kind":"sax","tables":[]}'.encode()),
}


def str16(s):
    b = s.encode()
    return struct.pack("<H", len(b)) + b


def str32(s):
    b = s.encode()
    return struct.pack("<I", len(b)) + b


def tensor(name, code, fmt, dims, values):
    return str16(name) + struct.pack("<BB", code, len(dims)) + struct.pack(f"<{len(dims)}I", *dims) + struct.pack(f"<{len(values)}{fmt}", *values)


FRAMES = tensor("frames", 1, "f", [1, 2, 2], [0.0, 1.5, -2.0, 4.0])
MASK = tensor("mask", 3, "B", [1, 2, 2], [0, 1, 2, 1])

WORKER = {
    "load": (1, str16("oracle_segmenter") + struct.pack("<BH", 0, 1) + str16("threshold") + str16("0.5")),
    "load_ack": (2, struct.pack("<B", 1) + str32("device unsupported")),
    "infer": (3, struct.pack("<IH", 7, 1) + FRAMES),
    "result": (4, struct.pack("<IB", 7, 0) + str32("") + struct.pack("<H", 1) + MASK),
    "shutdown": (5, b""),
}

if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    for prefix, table in (("icsp", ICSP), ("worker", WORKER)):
        for name, (msg_id, payload) in table.items():
            (OUT / f"{prefix}_{name}.bin").write_bytes(frame(msg_id, payload))
