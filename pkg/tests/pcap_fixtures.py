"""Byte-level pcap fixtures shared by the ingest and acceptance tests."""

import ipaddress
import struct

from cosseg.model import Direction

# Hand-assembled little-endian microsecond capture, Ethernet link type.
#   frame 1: 192.168.0.2 -> 10.0.0.1, orig_len 60,   t = 1700000000.250000
#   frame 2: 10.0.0.1 -> 192.168.0.2, orig_len 1514, t = 1700000000.251500
#   frame 3: ARP (non-IP),            orig_len 42,   t = 1700000000.252000
#   frame 4: 192.168.0.2 -> 10.0.0.1, orig_len 100,  t = 1700000001.000000
ETH = "ffffffffffff" "020000000001"
_IP_UP = "4500002800000000400600" "00" "c0a80002" "0a000001"
_IP_DOWN = "4500002800000000400600" "00" "0a000001" "c0a80002"
GOLDEN_LE_US = bytes.fromhex(
    "d4c3b2a1" "0200" "0400" "00000000" "00000000" "ffff0000" "01000000"
    "00f15365" "90d00300" "22000000" "3c000000" + ETH + "0800" + _IP_UP
    + "00f15365" "6cd60300" "22000000" "ea050000" + ETH + "0800" + _IP_DOWN
    + "00f15365" "60d80300" "0e000000" "2a000000" + ETH + "0806"
    + "01f15365" "00000000" "22000000" "64000000" + ETH + "0800" + _IP_UP
)
EXPECTED_TIMES = [0.0, 0.0015, 0.75]
EXPECTED_LENGTHS = [60, 1514, 100]
EXPECTED_DIRS = [Direction.UP, Direction.DOWN, Direction.UP]


def build_pcap(records, *, endian="<", nano=False, linktype=1):
    """records: (sec, frac, orig_len, frame_bytes) with frac in µs or ns."""
    magic = 0xA1B23C4D if nano else 0xA1B2C3D4
    out = [struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)]
    for sec, frac, orig, frame in records:
        out.append(struct.pack(endian + "IIII", sec, frac, len(frame), orig))
        out.append(frame)
    return b"".join(out)


def eth(ethertype, payload=b""):
    return bytes.fromhex(ETH) + struct.pack("!H", ethertype) + payload


def ipv4(src, dst):
    return bytes.fromhex("45000028000000004006" "0000") + ipaddress.IPv4Address(src).packed + ipaddress.IPv4Address(dst).packed


def ipv6(src, dst):
    return bytes.fromhex("6000000000000640") + ipaddress.IPv6Address(src).packed + ipaddress.IPv6Address(dst).packed


def golden_records(nano):
    scale = 1000 if nano else 1
    up = eth(0x0800, ipv4("192.168.0.2", "10.0.0.1"))
    down = eth(0x0800, ipv4("10.0.0.1", "192.168.0.2"))
    return [
        (1700000000, 250000 * scale, 60, up),
        (1700000000, 251500 * scale, 1514, down),
        (1700000000, 252000 * scale, 42, eth(0x0806)),
        (1700000001, 0, 100, up),
    ]
