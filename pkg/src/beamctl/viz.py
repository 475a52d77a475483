"""Spectrum sampling, lossless compression, and link-timing benchmarks.

Histogram memory is sampled from the acquisition resident, optionally
rebinned, encoded as zero-run + variable-length integers, and shipped over
a modeled link.  `crossover_benchmark` compares the compressed path against
direct raw readout across a bandwidth sweep and solves for the bandwidth
where the two cost curves intersect: above it, compressing on the slow
acquisition CPU is wasted work.

Container format (`MAKS1`, little-endian):
    magic `MAKS1` | u8 ndims | u32 dims[ndims] | u32 factors[ndims] |
    u8 encoding | u64 monitor | f64 live_time | u64 payload_len | payload

Encodings: 0 = raw u64 cells, 1 = zero-run + LEB128.
"""

from __future__ import annotations

import math
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .residents import DaqResident, Histogram

MAGIC = b"MAKS1"
ENC_RAW = 0
ENC_RLE = 1

# cost model: the acquisition-side CPU pays per input cell to compress and
# per output cell to serialize; the link adds latency plus bytes/bandwidth
COMPRESS_COST = 2e-6    # s per input cell
SERIALIZE_COST = 2e-7   # s per serialized cell
DEFAULT_LATENCY = 0.005  # s per transfer


class VizError(Exception):
    pass


class BadFactors(VizError):
    pass


class CorruptPayload(VizError):
    pass


# -- sampling --------------------------------------------------------------


def sample(daq: DaqResident) -> Histogram:
    """Atomic point-in-time copy of the DAQ histogram memory."""
    return daq.sample()


# -- rebinning ---------------------------------------------------------------


def rebin(h: Histogram, factors) -> Histogram:
    """Sum adjacent bins groupwise; factors must divide the extents exactly
    so the total count is conserved."""
    factors = tuple(int(f) for f in factors)
    if len(factors) != len(h.dims):
        raise BadFactors(f"{len(factors)} factors for {len(h.dims)} axes")
    if any(f < 1 for f in factors):
        raise BadFactors(f"factors must be >= 1, got {factors}")
    if any(d % f for d, f in zip(h.dims, factors)):
        raise BadFactors(f"factors {factors} do not divide extents {h.dims}")
    if all(f == 1 for f in factors):
        return Histogram(h.dims, h.counts.copy(), h.monitor, h.live_time)
    arr = h.counts.reshape(h.dims)
    shape = []
    for d, f in zip(h.dims, factors):
        shape.extend((d // f, f))
    grouped = arr.reshape(shape)
    summed = grouped.sum(axis=tuple(range(1, 2 * len(factors), 2)),
                         dtype=np.uint64)
    new_dims = tuple(d // f for d, f in zip(h.dims, factors))
    return Histogram(new_dims, summed, h.monitor, h.live_time)


# -- zero-run + LEB128 codec ---------------------------------------------------

# A 0x00 byte introduces a run of zeros (LEB128 run length follows); any
# other leading byte starts a plain LEB128 value.  Nonzero values never
# encode to a leading 0x00, so the stream is self-delimiting.


def _leb128(value: int, out: bytearray) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def encode_counts(counts) -> bytes:
    out = bytearray()
    run = 0
    for v in counts:
        v = int(v)
        if v == 0:
            run += 1
            continue
        if run:
            out.append(0x00)
            _leb128(run, out)
            run = 0
        _leb128(v, out)
    if run:
        out.append(0x00)
        _leb128(run, out)
    return bytes(out)


def _read_leb128(payload: bytes, pos: int) -> tuple[int, int]:
    value = 0
    shift = 0
    while True:
        if pos >= len(payload):
            raise CorruptPayload("payload ends inside a varint")
        byte = payload[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7
        if shift > 63:
            raise CorruptPayload("varint exceeds 64 bits")


def decode_counts(payload: bytes, n_cells: int) -> np.ndarray:
    counts = np.zeros(n_cells, dtype=np.uint64)
    filled = 0
    pos = 0
    while pos < len(payload):
        if payload[pos] == 0x00:
            run, pos = _read_leb128(payload, pos + 1)
            if run < 1:
                raise CorruptPayload("zero-length run")
            filled += run
        else:
            value, pos = _read_leb128(payload, pos)
            if value >= 1 << 64:
                raise CorruptPayload("count exceeds 64 bits")
            if filled >= n_cells:
                raise CorruptPayload("more values than cells")
            counts[filled] = value
            filled += 1
    if filled != n_cells:
        raise CorruptPayload(f"decoded {filled} cells, expected {n_cells}")
    return counts


# -- compressed container ---------------------------------------------------------


@dataclass(frozen=True)
class CompressedSpectrum:
    dims: tuple           # original extents, before rebin
    factors: tuple
    encoding: int
    monitor: int
    live_time: float
    payload: bytes

    @property
    def rebinned_dims(self) -> tuple:
        return tuple(d // f for d, f in zip(self.dims, self.factors))

    def to_bytes(self) -> bytes:
        nd = len(self.dims)
        head = MAGIC + struct.pack("<B", nd)
        head += struct.pack(f"<{nd}I", *self.dims) if nd else b""
        head += struct.pack(f"<{nd}I", *self.factors) if nd else b""
        head += struct.pack("<BQdQ", self.encoding, self.monitor,
                            self.live_time, len(self.payload))
        return head + self.payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CompressedSpectrum":
        if blob[:5] != MAGIC:
            raise CorruptPayload("bad magic")
        try:
            nd = blob[5]
            pos = 6
            dims = struct.unpack_from(f"<{nd}I", blob, pos)
            pos += 4 * nd
            factors = struct.unpack_from(f"<{nd}I", blob, pos)
            pos += 4 * nd
            encoding, monitor, live_time, plen = struct.unpack_from(
                "<BQdQ", blob, pos)
            pos += struct.calcsize("<BQdQ")
        except (struct.error, IndexError) as exc:
            raise CorruptPayload(f"truncated header: {exc}") from exc
        if encoding not in (ENC_RAW, ENC_RLE):
            raise CorruptPayload(f"unknown encoding {encoding}")
        payload = blob[pos:]
        if len(payload) != plen:
            raise CorruptPayload(
                f"payload length {len(payload)} != declared {plen}")
        return cls(tuple(dims), tuple(factors), encoding, monitor,
                   live_time, payload)


def header_size(ndims: int) -> int:
    return len(MAGIC) + 1 + 8 * ndims + struct.calcsize("<BQdQ")


def compress(h: Histogram, factors=None) -> CompressedSpectrum:
    factors = tuple(factors) if factors is not None else (1,) * len(h.dims)
    binned = rebin(h, factors)
    payload = encode_counts(binned.counts)
    return CompressedSpectrum(h.dims, factors, ENC_RLE, h.monitor,
                              h.live_time, payload)


def raw_container(h: Histogram) -> CompressedSpectrum:
    """Direct-readout framing: same container, untouched u64 cells."""
    payload = np.ascontiguousarray(h.counts, dtype="<u8").tobytes()
    return CompressedSpectrum(h.dims, (1,) * len(h.dims), ENC_RAW,
                              h.monitor, h.live_time, payload)


def decompress(c: CompressedSpectrum) -> Histogram:
    dims = c.rebinned_dims
    n_cells = int(np.prod(dims, dtype=np.int64))
    if c.encoding == ENC_RAW:
        if len(c.payload) != 8 * n_cells:
            raise CorruptPayload(
                f"raw payload {len(c.payload)} bytes != {8 * n_cells}")
        counts = np.frombuffer(c.payload, dtype="<u8").astype(np.uint64)
    else:
        counts = decode_counts(c.payload, n_cells)
    return Histogram(dims, counts, c.monitor, c.live_time)


# -- link timing --------------------------------------------------------------------


@dataclass(frozen=True)
class LinkModel:
    bandwidth: float          # bytes per second
    latency: float = DEFAULT_LATENCY

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise VizError("bandwidth must be positive")
        if self.latency < 0:
            raise VizError("latency must be non-negative")


@dataclass(frozen=True)
class CostModel:
    compress_per_cell: float = COMPRESS_COST
    serialize_per_cell: float = SERIALIZE_COST


@dataclass(frozen=True)
class TransferReport:
    mode: str                 # "compressed" or "direct"
    bytes_sent: int
    prep_time: float
    transfer_time: float
    total_time: float
    bandwidth: float


def transfer(h: Histogram, mode: str, link: LinkModel, factors=None,
             costs: CostModel | None = None,
             spool_dir: Path | None = None) -> TransferReport:
    """Time one readout.  Direct mode serializes the raw cells; compressed
    mode encodes (rebinned) cells, spools the container to an intermediate
    file, and sends that file."""
    costs = costs or CostModel()
    cells = int(h.counts.size)
    if mode == "direct":
        blob = raw_container(h).to_bytes()
        prep = costs.serialize_per_cell * cells
    elif mode == "compressed":
        c = compress(h, factors)
        blob = c.to_bytes()
        out_cells = int(np.prod(c.rebinned_dims, dtype=np.int64))
        prep = costs.compress_per_cell * cells + costs.serialize_per_cell * out_cells
        if spool_dir is not None:
            spool = Path(spool_dir) / "intermediate.maks"
            spool.write_bytes(blob)
        else:
            with tempfile.NamedTemporaryFile(suffix=".maks") as fh:
                fh.write(blob)
                fh.flush()
    else:
        raise VizError(f"unknown transfer mode {mode!r}")
    transfer_time = len(blob) / link.bandwidth
    total = prep + link.latency + transfer_time
    return TransferReport(mode, len(blob), prep, transfer_time, total,
                          link.bandwidth)


# -- crossover benchmark ---------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkResult:
    rows: tuple               # TransferReports, both modes per bandwidth
    crossover: float | None   # bandwidth where the curves intersect
    dominant: str | None      # set when one mode wins the whole sweep


def crossover_benchmark(h: Histogram, bandwidths, factors=None,
                        costs: CostModel | None = None,
                        latency: float = DEFAULT_LATENCY,
                        spool_dir: Path | None = None) -> BenchmarkResult:
    bandwidths = [float(b) for b in bandwidths]
    if len(bandwidths) < 2:
        raise VizError("need at least two sweep points")
    if bandwidths != sorted(bandwidths):
        raise VizError("bandwidth sweep must be ascending")
    rows = []
    for bw in bandwidths:
        link = LinkModel(bw, latency)
        rows.append(transfer(h, "compressed", link, factors, costs, spool_dir))
        rows.append(transfer(h, "direct", link, factors, costs, spool_dir))

    # both totals are prep + latency + bytes/bw, so their difference is
    # A + B/bw: monotone in bw, hence at most one sign change
    a = rows[0].prep_time - rows[1].prep_time
    b = rows[0].bytes_sent - rows[1].bytes_sent
    diffs = [rows[i].total_time - rows[i + 1].total_time
             for i in range(0, len(rows), 2)]
    if all(d > 0 for d in diffs):
        return BenchmarkResult(tuple(rows), None, "direct")
    if all(d < 0 for d in diffs):
        return BenchmarkResult(tuple(rows), None, "compressed")
    if a == 0:
        # parallel curves: any sign flip above was a tie, not a crossing
        return BenchmarkResult(tuple(rows), None,
                               "direct" if b >= 0 else "compressed")
    crossover = -b / a  # exact root of A + B/bw = 0
    return BenchmarkResult(tuple(rows), crossover, None)


def benchmark_table(result: BenchmarkResult) -> str:
    """Tab-separated report, one row per (bandwidth, mode)."""
    lines = ["bandwidth\tmode\tbytes\tprep\ttransfer\ttotal"]
    for r in result.rows:
        lines.append(f"{r.bandwidth!r}\t{r.mode}\t{r.bytes_sent}"
                     f"\t{r.prep_time!r}\t{r.transfer_time!r}\t{r.total_time!r}")
    tail = "none" if result.crossover is None else repr(result.crossover)
    lines.append(f"crossover={tail}")
    return "\n".join(lines) + "\n"
