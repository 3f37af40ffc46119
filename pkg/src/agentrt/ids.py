"""Sortable identifiers for events and conversations.

Ids are 26-character Crockford base32 strings encoding a 48-bit millisecond
timestamp followed by 80 random bits, so lexicographic order matches creation
order across processes to millisecond precision.  Within one process the
random tail is incremented when two ids land on the same millisecond, which
keeps ordering strict for a single writer.
"""

from __future__ import annotations

import os
import re
import threading
import time

ALPHABET = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
_ID_RE = re.compile(r"^[0-9A-HJKMNP-TV-Z]{26}$")

_lock = threading.Lock()
_last_ms = -1
_last_tail = 0


def _encode(ms: int, tail: int) -> str:
    value = (ms << 80) | tail
    chars = []
    for _ in range(26):
        chars.append(ALPHABET[value & 0x1F])
        value >>= 5
    return "".join(reversed(chars))


def new_id() -> str:
    """Return a fresh sortable id (unique and increasing in this process)."""
    global _last_ms, _last_tail
    with _lock:
        ms = time.time_ns() // 1_000_000
        if ms <= _last_ms:
            # Same (or rewound) millisecond: bump the random tail instead so
            # ids stay strictly increasing for this writer.
            ms = _last_ms
            tail = _last_tail + 1
            if tail >= 1 << 80:  # pragma: no cover - 2^80 ids in one ms
                ms += 1
                tail = int.from_bytes(os.urandom(10), "big")
        else:
            tail = int.from_bytes(os.urandom(10), "big")
        _last_ms = ms
        _last_tail = tail
        return _encode(ms, tail)


def is_valid_id(value: str) -> bool:
    """Check the shape of an id without any notion of where it came from."""
    return bool(_ID_RE.match(value))


def id_timestamp_ms(value: str) -> int:
    """Extract the millisecond timestamp prefix from an id."""
    if not is_valid_id(value):
        raise ValueError(f"not a valid id: {value!r}")
    acc = 0
    for ch in value[:10]:
        acc = (acc << 5) | ALPHABET.index(ch)
    # The first 10 characters decode to a 50-bit number whose top two bits
    # are the encoding pad (always zero), so the value is the timestamp.
    return acc
