#!/usr/bin/env python3
"""Standalone parser for the register wire format.

Written before (and kept independent of) the package codec so the two can
cross-check each other. Layout, all integers big-endian:

    mode        1 octet   (0x01 signed plaintext, 0x02 encrypted)
    len         4 octets  (plaintext octet count)
    data_field  ceil(len*8/W)*W/8 octets
    masked_cw   W/8 octets
    masked_mfd  W/8 octets

An area image is a 4-octet register count followed by that many registers.

Usage: independent_decoder.py [--width W] [--area] HEXFILE   (or hex on stdin)
"""

import argparse
import json
import struct
import sys

MODE_NAMES = {1: "sign", 2: "encrypt"}


def parse_register(raw: bytes, width: int, offset: int = 0) -> tuple[dict, int]:
    """Parse one register starting at offset; returns (fields, next offset)."""
    word = width // 8
    if len(raw) - offset < 5:
        raise ValueError("truncated: header incomplete")
    mode_octet = raw[offset]
    if mode_octet not in MODE_NAMES:
        raise ValueError(f"unknown mode octet 0x{mode_octet:02x}")
    (length,) = struct.unpack_from(">I", raw, offset + 1)
    data_octets = ((length + word - 1) // word) * word
    total = 5 + data_octets + 2 * word
    if len(raw) - offset < total:
        raise ValueError("truncated: body incomplete")
    body = raw[offset + 5 : offset + total]
    return (
        {
            "mode": MODE_NAMES[mode_octet],
            "len": length,
            "data_field": body[:data_octets].hex(),
            "masked_cw": body[data_octets : data_octets + word].hex(),
            "masked_mfd": body[data_octets + word :].hex(),
        },
        offset + total,
    )


def parse_register_strict(raw: bytes, width: int) -> dict:
    fields, end = parse_register(raw, width)
    if end != len(raw):
        raise ValueError("trailing garbage after register")
    return fields


def parse_area(raw: bytes, width: int) -> list[dict]:
    if len(raw) < 4:
        raise ValueError("truncated: register count incomplete")
    (count,) = struct.unpack_from(">I", raw, 0)
    offset = 4
    registers = []
    for _ in range(count):
        fields, offset = parse_register(raw, width, offset)
        registers.append(fields)
    if offset != len(raw):
        raise ValueError("trailing garbage after area")
    return registers


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("hexfile", nargs="?", help="file with hex octets; stdin if absent")
    parser.add_argument("--width", type=int, default=64, choices=(8, 16, 32, 64))
    parser.add_argument("--area", action="store_true", help="parse an area image")
    args = parser.parse_args(argv)

    if args.hexfile:
        with open(args.hexfile) as fh:
            text = fh.read()
    else:
        text = sys.stdin.read()
    raw = bytes.fromhex("".join(text.split()))

    try:
        if args.area:
            result = parse_area(raw, args.width)
        else:
            result = parse_register_strict(raw, args.width)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    json.dump(result, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
