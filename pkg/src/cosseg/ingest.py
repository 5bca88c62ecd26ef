"""Build TrafficStreams from packet-log CSV files and classic pcap captures."""

from __future__ import annotations

import csv
import ipaddress
import logging
import struct
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from .model import CosLabel, Direction, TrafficStream

log = logging.getLogger(__name__)

CSV_COLUMNS = ("timestamp", "length", "direction")
CSV_COLUMNS_IAT = CSV_COLUMNS + ("iat",)

# tolerance on a supplied iat column vs. recomputed timestamp deltas
IAT_CHECK_TOLERANCE = 1e-6
# rows may be out of order by at most this much (seconds) before we refuse to sort them
SORT_TOLERANCE = 1e-3


class IngestError(ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        where = ""
        if self.path is not None:
            where = self.path + (f":{line}" if line is not None else "") + ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


def _relative_seconds(stamps: list[Decimal]) -> np.ndarray:
    origin = stamps[0]
    return np.array([float(s - origin) for s in stamps], dtype=np.float64)


def read_csv(
    path: str | Path,
    label: CosLabel,
    *,
    source: str | None = None,
    sort_tolerance: float = SORT_TOLERANCE,
) -> TrafficStream:
    """Read a ``timestamp,length,direction[,iat]`` packet log.

    Timestamps are rebased to the earliest packet and iat is always recomputed
    from them; a supplied iat column is only cross-checked.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty file", path) from None
        header = tuple(h.strip().lower() for h in header)
        if header not in (CSV_COLUMNS, CSV_COLUMNS_IAT):
            raise IngestError(
                f"bad header {','.join(header)!r}; expected "
                f"{','.join(CSV_COLUMNS)}[,iat]",
                path,
                1,
            )
        has_iat = len(header) == 4

        stamps: list[Decimal] = []
        lengths: list[int] = []
        dirs: list[int] = []
        lines: list[int] = []
        running_max: Decimal | None = None
        prev: Decimal | None = None
        for row in reader:
            lineno = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise IngestError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            try:
                ts = Decimal(row[0].strip())
                length = int(row[1].strip())
            except (InvalidOperation, ValueError):
                raise IngestError(f"malformed row {row!r}", path, lineno) from None
            if not ts.is_finite() or ts < 0:
                raise IngestError(f"timestamp must be finite and >= 0, got {row[0]!r}", path, lineno)
            if length < 1:
                raise IngestError(f"packet length must be >= 1, got {length}", path, lineno)
            try:
                direction = Direction.parse(row[2])
            except ValueError:
                raise IngestError(f"unknown direction token {row[2].strip()!r}", path, lineno) from None
            if has_iat and prev is not None:
                try:
                    given = float(row[3])
                except ValueError:
                    raise IngestError(f"malformed iat {row[3]!r}", path, lineno) from None
                if abs(given - float(ts - prev)) > IAT_CHECK_TOLERANCE:
                    raise IngestError(
                        f"iat {given} disagrees with timestamp delta {float(ts - prev)}",
                        path,
                        lineno,
                    )
            if running_max is not None and float(running_max - ts) > sort_tolerance:
                raise IngestError(
                    f"timestamp {ts} precedes earlier row by more than {sort_tolerance}s",
                    path,
                    lineno,
                )
            running_max = ts if running_max is None else max(running_max, ts)
            prev = ts
            stamps.append(ts)
            lengths.append(length)
            dirs.append(int(direction))
            lines.append(lineno)

    if not stamps:
        raise IngestError("empty file (no packet rows)", path)
    order = sorted(range(len(stamps)), key=stamps.__getitem__)  # stable
    stamps = [stamps[i] for i in order]
    return TrafficStream.from_timestamps(
        label,
        _relative_seconds(stamps),
        [lengths[i] for i in order],
        [dirs[i] for i in order],
        source=str(path) if source is None else source,
    )


def write_csv(stream: TrafficStream, path: str | Path) -> None:
    """Write ``stream`` in the packet-log schema, iat column included."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS_IAT)
        for ts, length, d, iat in zip(
            stream.timestamps.tolist(),
            stream.lengths.tolist(),
            stream.directions.tolist(),
            stream.iats.tolist(),
        ):
            writer.writerow((repr(ts), length, Direction(d).token, repr(iat)))


# --- pcap ------------------------------------------------------------------

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101

_MAGICS = {
    b"\xd4\xc3\xb2\xa1": ("<", 1_000),  # little-endian, microseconds
    b"\xa1\xb2\xc3\xd4": (">", 1_000),
    b"\x4d\x3c\xb2\xa1": ("<", 1),  # little-endian, nanoseconds
    b"\xa1\xb2\x3c\x4d": (">", 1),
}
_ETHERTYPE_IPV4 = 0x0800
_ETHERTYPE_IPV6 = 0x86DD
_ETHERTYPE_VLAN = (0x8100, 0x88A8)


@dataclass(frozen=True)
class EndpointSpec:
    """Client-side address or CIDR prefix used to orient packets."""

    address: str
    network: ipaddress.IPv4Network | ipaddress.IPv6Network = field(init=False, repr=False)

    def __post_init__(self) -> None:
        try:
            net = ipaddress.ip_network(self.address.strip(), strict=False)
        except ValueError as exc:
            raise ValueError(f"invalid endpoint address {self.address!r}: {exc}") from None
        object.__setattr__(self, "network", net)

    def matches(self, addr: ipaddress.IPv4Address | ipaddress.IPv6Address) -> bool:
        return addr.version == self.network.version and addr in self.network


@dataclass
class PcapSummary:
    frames: int = 0
    kept: int = 0
    non_ip: int = 0
    both_sides: int = 0
    neither_side: int = 0

    @property
    def skipped(self) -> int:
        return self.non_ip + self.both_sides + self.neither_side


def _ip_addresses(frame: bytes, linktype: int):
    """Return (src, dst) addresses of an IP frame, or None if not IP."""
    if linktype == LINKTYPE_ETHERNET:
        if len(frame) < 14:
            return None
        offset = 12
        ethertype = struct.unpack_from("!H", frame, offset)[0]
        while ethertype in _ETHERTYPE_VLAN and len(frame) >= offset + 6:
            offset += 4
            ethertype = struct.unpack_from("!H", frame, offset)[0]
        payload = frame[offset + 2 :]
        if ethertype not in (_ETHERTYPE_IPV4, _ETHERTYPE_IPV6):
            return None
    elif linktype == LINKTYPE_RAW:
        payload = frame
    else:
        raise IngestError(f"unsupported link type {linktype}")
    if not payload:
        return None
    version = payload[0] >> 4
    if version == 4 and len(payload) >= 20:
        return ipaddress.IPv4Address(payload[12:16]), ipaddress.IPv4Address(payload[16:20])
    if version == 6 and len(payload) >= 40:
        return ipaddress.IPv6Address(payload[8:24]), ipaddress.IPv6Address(payload[24:40])
    return None


class PcapReader:
    """Single-use reader for one classic pcap file.

    After :meth:`read`, ``summary`` holds frame counts including the frames
    that were skipped because their direction could not be attributed.
    """

    def __init__(self, path: str | Path, endpoint: EndpointSpec | str):
        self.path = Path(path)
        self.endpoint = endpoint if isinstance(endpoint, EndpointSpec) else EndpointSpec(endpoint)
        self.summary = PcapSummary()
        self.linktype: int | None = None
        self._done = False

    def read(self, label: CosLabel, source: str | None = None) -> TrafficStream:
        if self._done:
            raise RuntimeError("PcapReader instances are single-use")
        self._done = True
        data = self.path.read_bytes()
        if len(data) < 24:
            raise IngestError("truncated pcap global header", self.path)
        magic = data[:4]
        if magic not in _MAGICS:
            if magic == b"\x0a\x0d\x0d\x0a":
                raise IngestError("pcapng is not supported; convert to classic pcap", self.path)
            raise IngestError(f"unknown pcap magic 0x{magic.hex()}", self.path)
        endian, ns_per_tick = _MAGICS[magic]
        self.linktype = struct.unpack_from(endian + "I", data, 20)[0] & 0x0FFFFFFF
        if self.linktype not in (LINKTYPE_ETHERNET, LINKTYPE_RAW):
            raise IngestError(f"unsupported link type {self.linktype}", self.path)

        rec = struct.Struct(endian + "IIII")
        stamps_ns: list[int] = []
        lengths: list[int] = []
        dirs: list[int] = []
        offset = 24
        summary = self.summary
        while offset < len(data):
            if offset + rec.size > len(data):
                raise IngestError(
                    f"truncated frame header at byte {offset} (frame {summary.frames + 1})",
                    self.path,
                )
            ts_sec, ts_frac, incl_len, orig_len = rec.unpack_from(data, offset)
            offset += rec.size
            if offset + incl_len > len(data):
                raise IngestError(
                    f"truncated frame data at byte {offset} (frame {summary.frames + 1})",
                    self.path,
                )
            frame = data[offset : offset + incl_len]
            offset += incl_len
            summary.frames += 1
            if orig_len < 1:
                raise IngestError(f"frame {summary.frames} has zero length", self.path)
            addrs = _ip_addresses(frame, self.linktype)
            if addrs is None:
                summary.non_ip += 1
                continue
            src_in = self.endpoint.matches(addrs[0])
            dst_in = self.endpoint.matches(addrs[1])
            if src_in and dst_in:
                summary.both_sides += 1
                continue
            if not (src_in or dst_in):
                summary.neither_side += 1
                continue
            summary.kept += 1
            stamps_ns.append(ts_sec * 1_000_000_000 + ts_frac * ns_per_tick)
            lengths.append(orig_len)
            dirs.append(int(Direction.UP if src_in else Direction.DOWN))

        if summary.skipped:
            log.warning(
                "%s: skipped %d of %d frames (non-IP %d, both sides %d, neither side %d)",
                self.path,
                summary.skipped,
                summary.frames,
                summary.non_ip,
                summary.both_sides,
                summary.neither_side,
            )
        if not stamps_ns:
            log.warning("%s: no packets attributed to endpoint %s", self.path, self.endpoint.address)
            return TrafficStream.from_timestamps(
                label, [], [], [], source=str(self.path) if source is None else source
            )
        order = sorted(range(len(stamps_ns)), key=stamps_ns.__getitem__)
        origin = stamps_ns[order[0]]
        return TrafficStream.from_timestamps(
            label,
            np.array([(stamps_ns[i] - origin) / 1e9 for i in order], dtype=np.float64),
            [lengths[i] for i in order],
            [dirs[i] for i in order],
            source=str(self.path) if source is None else source,
        )


def read_pcap(
    path: str | Path, endpoint: EndpointSpec | str, label: CosLabel, source: str | None = None
) -> TrafficStream:
    return PcapReader(path, endpoint).read(label, source)


def read_stream(
    path: str | Path, label: CosLabel, endpoint: EndpointSpec | str | None = None
) -> TrafficStream:
    """Dispatch on file suffix: ``.pcap``/``.cap`` need an endpoint, anything else is CSV."""
    path = Path(path)
    if path.suffix.lower() in (".pcap", ".cap", ".dmp"):
        if endpoint is None:
            raise IngestError("pcap input needs an endpoint address (--endpoint)", path)
        return read_pcap(path, endpoint, label)
    return read_csv(path, label)
