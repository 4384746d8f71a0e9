"""Reader/writer for the GDSII stream format and hierarchy flattening.

The stream format is a sequence of records, each framed as a big-endian
2-byte total length, a record-type byte and a data-type byte. Reals are
stored in 8-byte excess-64 base-16 floating point. Only the record subset
needed for planar circuit layouts is interpreted; everything else is
skipped with a warning.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GdsError",
    "GdsWarning",
    "GdsElement",
    "GdsStructure",
    "GdsLibrary",
    "decode_real8",
    "encode_real8",
    "parse_gds",
    "write_gds",
    "flatten",
]


class GdsError(Exception):
    """Raised on malformed streams or invalid libraries."""


class GdsWarning(UserWarning):
    """Raised for tolerated irregularities (skipped records, odd encodings)."""


# Record type bytes (subset for planar layouts).
HEADER = 0x00
BGNLIB = 0x01
LIBNAME = 0x02
UNITS = 0x03
ENDLIB = 0x04
BGNSTR = 0x05
STRNAME = 0x06
ENDSTR = 0x07
BOUNDARY = 0x08
PATH = 0x09
SREF = 0x0A
AREF = 0x0B
TEXT = 0x0C
LAYER = 0x0D
DATATYPE = 0x0E
WIDTH = 0x0F
XY = 0x10
ENDEL = 0x11
SNAME = 0x12
COLROW = 0x13
NODE = 0x15
STRANS = 0x1A
MAG = 0x1B
ANGLE = 0x1C
PATHTYPE = 0x21
BOX = 0x2D

_RECORD_NAMES = {
    HEADER: "HEADER", BGNLIB: "BGNLIB", LIBNAME: "LIBNAME", UNITS: "UNITS",
    ENDLIB: "ENDLIB", BGNSTR: "BGNSTR", STRNAME: "STRNAME", ENDSTR: "ENDSTR",
    BOUNDARY: "BOUNDARY", PATH: "PATH", SREF: "SREF", AREF: "AREF",
    TEXT: "TEXT", LAYER: "LAYER", DATATYPE: "DATATYPE", WIDTH: "WIDTH",
    XY: "XY", ENDEL: "ENDEL", SNAME: "SNAME", COLROW: "COLROW", NODE: "NODE",
    STRANS: "STRANS", MAG: "MAG", ANGLE: "ANGLE", PATHTYPE: "PATHTYPE",
    BOX: "BOX",
}

# Elements that carry no EM geometry; skipped record-by-record until ENDEL.
_IGNORED_ELEMENTS = {TEXT, NODE, BOX}

# Records that are only legal inside an open element body.
_ELEMENT_BODY = {LAYER, DATATYPE, WIDTH, PATHTYPE, XY, SNAME, COLROW,
                 STRANS, MAG, ANGLE}

_NAME_LIMIT = 32  # format limit for LIBNAME / STRNAME / SNAME
_COORD_MIN = -(2**31)
_COORD_MAX = 2**31 - 1


# ---------------------------------------------------------------------------
# Excess-64 real codec
# ---------------------------------------------------------------------------

def decode_real8(raw: bytes) -> float:
    """Decode an 8-byte excess-64 base-16 real.

    Bit 0 is the sign, bits 1-7 the exponent (excess 64), the remaining 56
    bits the mantissa as a fraction in [0, 1). The value is
    (-1)^sign * mantissa * 16^(exponent - 64).
    """
    if len(raw) != 8:
        raise GdsError(f"real8 needs exactly 8 bytes, got {len(raw)}")
    sign = raw[0] >> 7
    exponent = raw[0] & 0x7F
    mantissa = int.from_bytes(raw[1:], "big")
    if mantissa == 0:
        if exponent != 0:
            warnings.warn(
                f"real8 with zero mantissa but exponent {exponent}; decoding as 0.0",
                GdsWarning,
                stacklevel=2,
            )
        return 0.0
    value = math.ldexp(mantissa, 4 * (exponent - 64) - 56)
    return -value if sign else value


def encode_real8(x: float) -> bytes:
    """Encode a float as an 8-byte excess-64 base-16 real.

    The mantissa is normalized into [1/16, 1); values at or above 16^63
    do not fit the 7-bit exponent and raise.
    """
    if x == 0.0:
        return b"\x00" * 8
    if not math.isfinite(x):
        raise GdsError(f"cannot encode non-finite value {x!r}")
    sign = 0x80 if x < 0 else 0x00
    mag = abs(x)
    frac, exp2 = math.frexp(mag)  # mag = frac * 2**exp2, frac in [0.5, 1)
    exp16 = -((-exp2) // 4)  # ceil(exp2 / 4); mantissa = mag / 16**exp16 in [1/16, 1)
    mantissa = int(round(math.ldexp(frac, exp2 - 4 * exp16 + 56)))
    if mantissa >= 1 << 56:  # rounding spilled over a hex digit
        mantissa >>= 4
        exp16 += 1
    exponent = exp16 + 64
    if exponent > 127:
        raise GdsError(f"value {x!r} overflows the excess-64 exponent range")
    if exponent < 0:
        # Denormalize very small values instead of failing.
        mantissa >>= 4 * (-exponent)
        exponent = 0
        if mantissa == 0:
            warnings.warn(f"value {x!r} underflows real8; encoding 0.0",
                          GdsWarning, stacklevel=2)
            return b"\x00" * 8
    return bytes([sign | exponent]) + mantissa.to_bytes(7, "big")


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------

@dataclass
class GdsElement:
    """One element of a structure.

    ``kind`` is one of ``boundary``, ``path``, ``structure_ref`` or
    ``array_ref``. ``xy`` holds raw database-unit coordinates: the closed
    outline for boundaries, the centerline for paths, the placement point
    for structure refs and the three lattice points (origin, column
    corner, row corner) for array refs.
    """

    kind: str
    layer: int = 0
    datatype: int = 0
    xy: tuple[tuple[int, int], ...] = ()
    path_width: int = 0
    path_type: int = 0
    ref_name: str = ""
    rotation_deg: float = 0.0
    magnification: float = 1.0
    reflect_x: bool = False
    columns: int = 1
    rows: int = 1

    @property
    def translation(self) -> tuple[int, int]:
        return self.xy[0]

    @property
    def col_spacing(self) -> tuple[float, float]:
        o, c = self.xy[0], self.xy[1]
        return ((c[0] - o[0]) / self.columns, (c[1] - o[1]) / self.columns)

    @property
    def row_spacing(self) -> tuple[float, float]:
        o, r = self.xy[0], self.xy[2]
        return ((r[0] - o[0]) / self.rows, (r[1] - o[1]) / self.rows)

    def validate(self) -> None:
        if self.kind == "boundary":
            if len(self.xy) < 4:
                raise GdsError("boundary needs at least 4 points (closed)")
            if self.xy[0] != self.xy[-1]:
                raise GdsError("boundary outline must be closed")
        elif self.kind == "path":
            if len(self.xy) < 2:
                raise GdsError("path needs at least 2 points")
        elif self.kind == "structure_ref":
            if not self.ref_name or len(self.xy) != 1:
                raise GdsError("structure_ref needs a name and one placement point")
        elif self.kind == "array_ref":
            if not self.ref_name or len(self.xy) != 3:
                raise GdsError("array_ref needs a name and three lattice points")
            if self.columns < 1 or self.rows < 1:
                raise GdsError("array_ref needs columns >= 1 and rows >= 1")
        else:
            raise GdsError(f"unknown element kind {self.kind!r}")


@dataclass
class GdsStructure:
    name: str
    elements: list[GdsElement] = field(default_factory=list)


@dataclass
class GdsLibrary:
    name: str
    user_unit_per_db_unit: float = 1e-3
    meters_per_db_unit: float = 1e-9
    structures: list[GdsStructure] = field(default_factory=list)

    def validate(self) -> None:
        if self.meters_per_db_unit <= 0 or self.user_unit_per_db_unit <= 0:
            raise GdsError("library units must be positive")
        names = [s.name for s in self.structures]
        if len(set(names)) != len(names):
            raise GdsError("structure names must be unique within a library")
        for s in self.structures:
            for e in s.elements:
                e.validate()

    def structure(self, name: str) -> GdsStructure:
        for s in self.structures:
            if s.name == name:
                return s
        raise GdsError(f"no structure named {name!r} in library {self.name!r}")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

class _RecordStream:
    """Splits a byte stream into (offset, type, datatype, payload) records."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def __iter__(self):
        return self

    def __next__(self):
        data, off = self.data, self.offset
        if off >= len(data):
            raise StopIteration
        if len(data) - off < 4:
            raise GdsError(f"truncated record header at byte offset {off}")
        (length,) = struct.unpack_from(">H", data, off)
        if length < 4:
            raise GdsError(f"record length {length} < 4 at byte offset {off}")
        rectype, dtype = data[off + 2], data[off + 3]
        payload = data[off + 4 : off + length]
        if len(payload) != length - 4:
            raise GdsError(
                f"stream cut mid-record at byte offset {off} "
                f"(need {length} bytes, have {len(data) - off})"
            )
        self.offset = off + length
        return off, rectype, dtype, payload


def _ascii(payload: bytes) -> str:
    return payload.rstrip(b"\x00").decode("ascii")


def _int16s(payload: bytes) -> tuple[int, ...]:
    return struct.unpack(f">{len(payload) // 2}h", payload)


def _int32s(payload: bytes) -> tuple[int, ...]:
    return struct.unpack(f">{len(payload) // 4}l", payload)


def _xy_pairs(payload: bytes) -> tuple[tuple[int, int], ...]:
    flat = _int32s(payload)
    if len(flat) % 2:
        raise GdsError("XY record with odd coordinate count")
    return tuple(zip(flat[0::2], flat[1::2]))


def _record_name(rectype: int) -> str:
    return _RECORD_NAMES.get(rectype, f"0x{rectype:02X}")


def parse_gds(stream: bytes) -> GdsLibrary:
    """Parse a GDSII byte stream into a :class:`GdsLibrary`.

    Raises :class:`GdsError` on truncation, bad framing or record-ordering
    violations. Unsupported records are skipped with a :class:`GdsWarning`.
    """
    records = _RecordStream(bytes(stream))

    def expect(want: int):
        try:
            off, rectype, dtype, payload = next(records)
        except StopIteration:
            raise GdsError(f"stream ended while expecting {_record_name(want)}") from None
        if rectype != want:
            raise GdsError(
                f"expected {_record_name(want)} at byte offset {off}, "
                f"found {_record_name(rectype)}"
            )
        return payload

    expect(HEADER)
    expect(BGNLIB)  # timestamps ignored
    libname = _ascii(expect(LIBNAME))
    units = expect(UNITS)
    if len(units) != 16:
        raise GdsError("UNITS record must hold two 8-byte reals")
    lib = GdsLibrary(
        name=libname,
        user_unit_per_db_unit=decode_real8(units[:8]),
        meters_per_db_unit=decode_real8(units[8:]),
    )
    if lib.meters_per_db_unit <= 0 or lib.user_unit_per_db_unit <= 0:
        raise GdsError("UNITS record must carry positive unit scales")

    structure: GdsStructure | None = None
    element: GdsElement | None = None
    skipping_element = False
    ended = False

    for off, rectype, dtype, payload in records:
        if ended:
            raise GdsError(f"data after ENDLIB at byte offset {off}")

        if skipping_element:
            if rectype == ENDEL:
                skipping_element = False
            continue

        if rectype == BGNSTR:
            if structure is not None:
                raise GdsError(f"BGNSTR inside open structure at byte offset {off}")
            structure = GdsStructure(name=_ascii(expect(STRNAME)))
        elif rectype == ENDSTR:
            if structure is None or element is not None:
                raise GdsError(f"ENDSTR out of place at byte offset {off}")
            lib.structures.append(structure)
            structure = None
        elif rectype == ENDLIB:
            if structure is not None:
                raise GdsError("unclosed structure: ENDLIB before ENDSTR")
            ended = True
        elif rectype in (BOUNDARY, PATH, SREF, AREF):
            if structure is None or element is not None:
                raise GdsError(
                    f"{_record_name(rectype)} outside structure body at byte offset {off}"
                )
            kind = {BOUNDARY: "boundary", PATH: "path",
                    SREF: "structure_ref", AREF: "array_ref"}[rectype]
            element = GdsElement(kind=kind)
        elif rectype in _IGNORED_ELEMENTS:
            if structure is None:
                raise GdsError(
                    f"{_record_name(rectype)} outside structure body at byte offset {off}"
                )
            warnings.warn(f"skipping {_record_name(rectype)} element (no EM geometry)",
                          GdsWarning, stacklevel=2)
            skipping_element = True
        elif rectype == ENDEL:
            if element is None:
                raise GdsError(f"ENDEL without open element at byte offset {off}")
            if element.kind == "boundary" and element.xy and element.xy[0] != element.xy[-1]:
                warnings.warn("auto-closing unclosed boundary outline",
                              GdsWarning, stacklevel=2)
                element.xy = element.xy + (element.xy[0],)
            element.validate()
            structure.elements.append(element)
            element = None
        elif element is not None:
            _element_record(element, off, rectype, payload)
        elif rectype in _ELEMENT_BODY:
            raise GdsError(
                f"{_record_name(rectype)} record outside an element body at "
                f"byte offset {off} (record ordering violation)")
        else:
            warnings.warn(f"skipping unsupported record {_record_name(rectype)}",
                          GdsWarning, stacklevel=2)

    if not ended:
        raise GdsError("stream ended without ENDLIB")
    lib.validate()
    return lib


def _element_record(element: GdsElement, off: int, rectype: int, payload: bytes) -> None:
    if rectype == LAYER:
        element.layer = _int16s(payload)[0]
    elif rectype == DATATYPE:
        element.datatype = _int16s(payload)[0]
    elif rectype == WIDTH:
        element.path_width = _int32s(payload)[0]
    elif rectype == PATHTYPE:
        element.path_type = _int16s(payload)[0]
    elif rectype == XY:
        element.xy = _xy_pairs(payload)
    elif rectype == SNAME:
        element.ref_name = _ascii(payload)
    elif rectype == COLROW:
        element.columns, element.rows = _int16s(payload)
    elif rectype == STRANS:
        (bits,) = struct.unpack(">H", payload)
        element.reflect_x = bool(bits & 0x8000)
    elif rectype == MAG:
        element.magnification = decode_real8(payload)
    elif rectype == ANGLE:
        element.rotation_deg = decode_real8(payload)
    else:
        warnings.warn(
            f"skipping unsupported record {_record_name(rectype)} inside element "
            f"at byte offset {off}",
            GdsWarning,
            stacklevel=3,
        )


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------

def _record(rectype: int, dtype: int, payload: bytes = b"") -> bytes:
    if len(payload) % 2:
        raise GdsError("record payload must have even length")
    return struct.pack(">HBB", len(payload) + 4, rectype, dtype) + payload


def _ascii_payload(text: str, what: str) -> bytes:
    raw = text.encode("ascii")
    if len(raw) > _NAME_LIMIT:
        raise GdsError(f"{what} {text!r} exceeds the {_NAME_LIMIT}-character format limit")
    if len(raw) % 2:
        raw += b"\x00"
    return raw


def _xy_payload(xy) -> bytes:
    flat = []
    for x, y in xy:
        for v in (x, y):
            if not (_COORD_MIN <= v <= _COORD_MAX):
                raise GdsError(f"coordinate {v} outside signed 32-bit range")
            flat.append(int(v))
    return struct.pack(f">{len(flat)}l", *flat)


_ZERO_TIME = struct.pack(">12h", 1970, 1, 1, 0, 0, 0, 1970, 1, 1, 0, 0, 0)


def write_gds(lib: GdsLibrary) -> bytes:
    """Serialize a library back to GDSII bytes.

    ``parse_gds(write_gds(lib))`` is structurally identical to ``lib``;
    element order and coordinates are preserved exactly.
    """
    lib.validate()
    out = [
        _record(HEADER, 0x02, struct.pack(">h", 600)),
        _record(BGNLIB, 0x02, _ZERO_TIME),
        _record(LIBNAME, 0x06, _ascii_payload(lib.name, "library name")),
        _record(UNITS, 0x05,
                encode_real8(lib.user_unit_per_db_unit)
                + encode_real8(lib.meters_per_db_unit)),
    ]
    for s in lib.structures:
        out.append(_record(BGNSTR, 0x02, _ZERO_TIME))
        out.append(_record(STRNAME, 0x06, _ascii_payload(s.name, "structure name")))
        for e in s.elements:
            out.extend(_element_records(e))
        out.append(_record(ENDSTR, 0x00))
    out.append(_record(ENDLIB, 0x00))
    return b"".join(out)


def _strans_records(e: GdsElement) -> list[bytes]:
    recs = []
    if e.reflect_x or e.magnification != 1.0 or e.rotation_deg != 0.0:
        recs.append(_record(STRANS, 0x01, struct.pack(">H", 0x8000 if e.reflect_x else 0)))
        if e.magnification != 1.0:
            recs.append(_record(MAG, 0x05, encode_real8(e.magnification)))
        if e.rotation_deg != 0.0:
            recs.append(_record(ANGLE, 0x05, encode_real8(e.rotation_deg)))
    return recs


def _element_records(e: GdsElement) -> list[bytes]:
    e.validate()
    if e.kind == "boundary":
        recs = [
            _record(BOUNDARY, 0x00),
            _record(LAYER, 0x02, struct.pack(">h", e.layer)),
            _record(DATATYPE, 0x02, struct.pack(">h", e.datatype)),
        ]
    elif e.kind == "path":
        recs = [
            _record(PATH, 0x00),
            _record(LAYER, 0x02, struct.pack(">h", e.layer)),
            _record(DATATYPE, 0x02, struct.pack(">h", e.datatype)),
        ]
        if e.path_type:
            recs.append(_record(PATHTYPE, 0x02, struct.pack(">h", e.path_type)))
        if e.path_width:
            recs.append(_record(WIDTH, 0x03, struct.pack(">l", e.path_width)))
    elif e.kind == "structure_ref":
        recs = [_record(SREF, 0x00),
                _record(SNAME, 0x06, _ascii_payload(e.ref_name, "referenced name"))]
        recs.extend(_strans_records(e))
    else:  # array_ref
        recs = [_record(AREF, 0x00),
                _record(SNAME, 0x06, _ascii_payload(e.ref_name, "referenced name"))]
        recs.extend(_strans_records(e))
        recs.append(_record(COLROW, 0x02, struct.pack(">2h", e.columns, e.rows)))
    recs.append(_record(XY, 0x03, _xy_payload(e.xy)))
    recs.append(_record(ENDEL, 0x00))
    return recs


# ---------------------------------------------------------------------------
# Flattening
# ---------------------------------------------------------------------------

def _ref_transform(e: GdsElement) -> tuple[np.ndarray, float]:
    """Linear part of a reference placement: magnification, then x-axis
    reflection, then CCW rotation. Returns (2x2 matrix, |magnification|)."""
    m = e.magnification
    mat = np.array([[m, 0.0], [0.0, -m if e.reflect_x else m]])
    theta = math.radians(e.rotation_deg)
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    return rot @ mat, abs(m)


def _path_outline(points: np.ndarray, width: float, path_type: int) -> np.ndarray:
    """Convert a path centerline to a closed boundary outline.

    Flat end caps for path type 0, half-width square extensions for type 2.
    """
    from shapely.geometry import LineString

    if width <= 0:
        raise GdsError("path element needs a positive width to be flattened")
    if path_type not in (0, 2):
        raise GdsError(f"unsupported path type {path_type} (only 0 and 2)")
    cap = "flat" if path_type == 0 else "square"
    poly = LineString(points).buffer(width / 2.0, cap_style=cap, join_style="mitre")
    ring = np.asarray(poly.exterior.coords, dtype=float)
    return ring


def flatten(lib: GdsLibrary, top: str) -> list[tuple[int, np.ndarray]]:
    """Resolve all references under ``top`` into flat per-layer polygons.

    Returns ``(layer, outline)`` pairs where each outline is a closed
    (first row == last row) Nx2 float array in meters. The reference graph
    must be acyclic and every referenced structure must exist.
    """
    lib.validate()
    structure = lib.structure(top)
    out: list[tuple[int, np.ndarray]] = []
    scale = lib.meters_per_db_unit

    def emit(st: GdsStructure, mat: np.ndarray, shift: np.ndarray, mag: float,
             stack: tuple[str, ...]) -> None:
        if st.name in stack:
            cycle = " -> ".join(stack + (st.name,))
            raise GdsError(f"reference cycle: {cycle}")
        stack = stack + (st.name,)
        for e in st.elements:
            if e.kind == "boundary":
                pts = np.asarray(e.xy, dtype=float) @ mat.T + shift
                out.append((e.layer, pts * scale))
            elif e.kind == "path":
                pts = np.asarray(e.xy, dtype=float) @ mat.T + shift
                ring = _path_outline(pts, e.path_width * mag, e.path_type)
                out.append((e.layer, ring * scale))
            else:
                try:
                    child = lib.structure(e.ref_name)
                except GdsError:
                    raise GdsError(
                        f"dangling reference to {e.ref_name!r} in {st.name!r}"
                    ) from None
                ref_mat, ref_mag = _ref_transform(e)
                cmat = mat @ ref_mat
                cmag = mag * ref_mag
                if e.kind == "structure_ref":
                    origins = [np.asarray(e.xy[0], dtype=float)]
                else:
                    o = np.asarray(e.xy[0], dtype=float)
                    col = (np.asarray(e.xy[1], dtype=float) - o) / e.columns
                    row = (np.asarray(e.xy[2], dtype=float) - o) / e.rows
                    origins = [o + i * col + j * row
                               for j in range(e.rows) for i in range(e.columns)]
                for origin in origins:
                    emit(child, cmat, mat @ origin + shift, cmag, stack)

    emit(structure, np.eye(2), np.zeros(2), 1.0, ())
    return out
