"""Binary and JSON containers for responses, discrete channels and tap banks.

Binary layout (all integers little-endian)::

    offset  size  content
    0       4     magic b"SDMB"
    4       4     uint32 format version (1)
    8       4     uint32 header length H in bytes
    12      H     UTF-8 JSON header: {"kind", "shape", "dtype": "complex64", ...}
    12+H    ...   array data, row-major complex64 (little-endian)

The header carries everything needed to rebuild the object: the frequency
grid for a :class:`FreqResponse`, ``s``/``T``/``sample_offset``/``scale`` for a
:class:`DiscreteChannel`, and ``M``/``s``/``delta`` for a tap bank. Data is
stored in single precision, so a round trip is exact only to about 1e-7
relative. The JSON form keeps double precision and is meant for small cases;
complex arrays become ``{"shape", "re", "im"}`` objects.
"""
import json
import struct

import numpy as np

from .channel import FreqGrid, FreqResponse
from .discretize import DiscreteChannel
from .errors import InvalidSpecError

MAGIC = b"SDMB"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


def _header_and_array(obj, meta=None):
    if isinstance(obj, FreqResponse):
        g = obj.grid
        head = {"kind": "FreqResponse", "f_start": g.f_start, "f_step": g.f_step,
                "n_bins": g.n_bins}
        arr = obj.matrices
    elif isinstance(obj, DiscreteChannel):
        head = {"kind": "DiscreteChannel", "s": obj.s, "T": obj.T,
                "sample_offset": int(obj.sample_offset), "scale": float(obj.scale)}
        arr = obj.taps
    else:
        head = {"kind": "array"}
        arr = np.asarray(obj)
    head.update(meta or {})
    return head, arr


def _from_header(head, arr):
    kind = head.get("kind")
    if kind == "FreqResponse":
        grid = FreqGrid(head["f_start"], head["f_step"], head["n_bins"])
        return FreqResponse(grid, arr)
    if kind == "DiscreteChannel":
        return DiscreteChannel(arr, head["s"], head["T"], head.get("sample_offset", 0),
                               head.get("scale", 1.0))
    return arr


def to_bytes(obj, meta=None):
    """Serialize a FreqResponse, DiscreteChannel or complex array.

    ``meta`` adds JSON-serializable fields to the header (for a tap bank,
    e.g. ``{"M": 100, "s": 2, "delta": 57}``).
    """
    head, arr = _header_and_array(obj, meta)
    data = np.ascontiguousarray(arr, dtype="<c8")
    head["shape"] = list(data.shape)
    head["dtype"] = "complex64"
    hb = json.dumps(head, sort_keys=True).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hb)) + hb + data.tobytes()


def from_bytes(buf):
    """Inverse of :func:`to_bytes`; returns ``(obj, header)``."""
    if len(buf) < _PREFIX.size:
        raise InvalidSpecError("container is truncated")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise InvalidSpecError(f"bad magic {magic!r}")
    if version != VERSION:
        raise InvalidSpecError(f"unsupported container version {version}")
    start = _PREFIX.size
    head = json.loads(buf[start:start + hlen].decode("utf-8"))
    shape = tuple(head["shape"])
    count = int(np.prod(shape))
    data = np.frombuffer(buf, dtype="<c8", count=count, offset=start + hlen)
    if data.size != count:
        raise InvalidSpecError("container data is truncated")
    arr = data.reshape(shape).astype(np.complex128)
    return _from_header(head, arr), head


def save(path, obj, meta=None):
    with open(path, "wb") as fh:
        fh.write(to_bytes(obj, meta))


def load(path):
    """Read a binary container; returns ``(obj, header)``."""
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


# ----------------------------------------------------------------------------
# JSON
# ----------------------------------------------------------------------------


def encode_array(a):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return {"shape": list(a.shape), "re": a.real.ravel().tolist(),
                "im": a.imag.ravel().tolist()}
    return {"shape": list(a.shape), "re": a.ravel().tolist()}


def decode_array(d):
    re = np.asarray(d["re"], dtype=float)
    if "im" in d:
        re = re + 1j * np.asarray(d["im"], dtype=float)
    return re.reshape(d["shape"])


def to_json(obj, meta=None):
    """JSON text for a FreqResponse, DiscreteChannel or array (double precision)."""
    head, arr = _header_and_array(obj, meta)
    head["data"] = encode_array(np.asarray(arr, dtype=np.complex128))
    return json.dumps(head, sort_keys=True)


def from_json(text):
    head = json.loads(text)
    arr = decode_array(head.pop("data"))
    return _from_header(head, arr), head


def solution_record(sol):
    """JSON-ready summary of an EqualizerSolution (the tap bank goes to a binary file)."""
    return {"M": int(sol.M), "s": int(sol.s), "delta": int(sol.delta_used),
            "snr": [float(v) for v in sol.snr],
            "snr_db": [float(v) for v in sol.snr_db],
            "harmonic_snr": float(sol.harmonic_snr),
            "harmonic_snr_db": float(sol.harmonic_snr_db),
            "Ree": encode_array(sol.Ree)}
