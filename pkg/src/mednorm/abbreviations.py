"""Schwartz-Hearst detection of ``long form (SF)`` abbreviation definitions.

Text is processed line by line. A short-form candidate is the content of a
parenthetical preceded by whitespace (``;`` and ``:`` also close it) that
has 2-10 characters, at most two tokens, at least one letter, and an
alphanumeric first character. The long form is searched right to left in
the text before the parenthesis, must start at a word boundary with the
short form's first character, and may span at most
``min(len(SF) + 5, 2 * len(SF))`` tokens.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Iterator

_TOKEN_SEP = re.compile(r"[\s\-]+")


@dataclass(frozen=True)
class AbbreviationPair:
    short_form: str
    long_form: str
    line: int


class _Reject(Exception):
    pass


def _is_quote(ch: str, opening: bool) -> bool:
    if ch in "'\"":
        return True
    return unicodedata.category(ch) == ("Pi" if opening else "Pf")


def _strip_quotes(line: str) -> str:
    """Drop a quote right after ``(`` or right before ``)``, ``;`` or ``:``."""
    out = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "(" and i + 1 < len(line) and _is_quote(line[i + 1], True):
            out.append(ch)
            i += 2
            continue
        if _is_quote(ch, False) and i + 1 < len(line) and line[i + 1] in ");:":
            out.append(line[i + 1])
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def _short_form_ok(sf: str) -> bool:
    if not 2 <= len(sf) <= 10:
        return False
    if len(sf.split()) > 2:
        return False
    if not any(c.isalpha() for c in sf):
        return False
    return sf[0].isalnum()


def _parentheticals(line: str) -> Iterator[tuple[str, int]]:
    """Yield ``(short form candidate, start offset)`` for each `` (...)`` group."""
    if "(" not in line:
        return
    if line.count("(") != line.count(")") or line.find("(") > line.find(")"):
        raise _Reject("unbalanced parentheses")
    close = -1
    while True:
        opening = line.find(" (", close + 1)
        if opening == -1:
            return
        opening += 1
        pos, depth = opening + 1, 1
        while depth and pos < len(line):
            if line[pos] == "(":
                depth += 1
            elif line[pos] in ");:":
                depth -= 1
            pos += 1
        if depth:
            close = opening + 1
            continue
        close = pos
        start, stop = opening + 1, close - 1
        raw = line[start:stop]
        start += len(raw) - len(raw.lstrip())
        stop -= len(raw) - len(raw.rstrip())
        sf = line[start:stop]
        if not sf:
            raise _Reject("empty parenthetical")
        if _short_form_ok(sf):
            yield sf, start


def _definition_window(sf: str, sf_start: int, line: str) -> str:
    """Text before the parenthesis, starting at the word that holds enough initials of ``sf``."""
    tokens = _TOKEN_SEP.split(line[:sf_start - 2].lower())
    key = sf[0].lower()
    initials = [t[0] for t in tokens if t]
    needed = sf.lower().count(key)
    if needed > initials.count(key):
        raise _Reject("too few words starting with the first short-form character")
    count, back, idx = 0, 0, len(initials) - 1
    while count < needed:
        if -back > len(initials):
            raise _Reject("short form initial not found")
        back -= 1
        try:
            idx = initials.index(key, len(initials) + back)
        except ValueError:
            pass
        count = initials[idx:].count(key)
    start = len(" ".join(tokens[:idx]))
    stop = sf_start - 1
    return line[start:stop].strip()


def _match_long_form(definition: str, sf: str) -> str:
    """Right-to-left character alignment of ``sf`` inside ``definition``."""
    if len(definition) < len(sf):
        raise _Reject("definition shorter than abbreviation")
    if sf in definition.split():
        raise _Reject("abbreviation is a word of the definition")
    s, l_ = -1, -1
    n_def, n_sf = len(definition), len(sf)
    while True:
        if l_ < -n_def:
            raise _Reject("no alignment")
        long_char = definition[l_].lower()
        short_char = sf[s].lower()
        if not short_char.isalnum():
            s -= 1
        if s == -n_sf:
            if short_char == long_char:
                if l_ == -n_def or not definition[l_ - 1].isalnum():
                    break
                l_ -= 1
            else:
                l_ -= 1
                if l_ == -(n_def + 1):
                    raise _Reject("no alignment")
        elif short_char == long_char:
            s -= 1
            l_ -= 1
        else:
            l_ -= 1
    long_form = definition[l_:]
    if len(long_form.split()) > min(n_sf + 5, n_sf * 2):
        raise _Reject("long form too long")
    if long_form.count("(") != long_form.count(")"):
        raise _Reject("unbalanced parentheses in long form")
    return long_form


def detect_pairs(text: str) -> list[AbbreviationPair]:
    """All (short form, long form) definitions in ``text``, in order of appearance."""
    pairs = []
    for lineno, raw in enumerate(text.split("\n")):
        line = _strip_quotes(raw.strip())
        try:
            for sf, start in _parentheticals(line):
                try:
                    long_form = _match_long_form(_definition_window(sf, start, line), sf)
                except (_Reject, IndexError):
                    continue
                pairs.append(AbbreviationPair(sf, long_form, lineno))
        except _Reject:
            continue
    return pairs


def find_abbreviations(text: str) -> dict[str, str]:
    """Map each short form to its first detected long form."""
    out: dict[str, str] = {}
    for p in detect_pairs(text):
        out.setdefault(p.short_form, p.long_form)
    return out
