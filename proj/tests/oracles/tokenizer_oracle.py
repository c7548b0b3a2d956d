"""Regex re-statement of the token splitting rules. Prints the expected
split of each probe string as a C++ initializer the tokenizer test holds."""

import re

WORD_OR_PUNCT = re.compile(rb"[A-Za-z0-9\x80-\xff]+|[^\sA-Za-z0-9\x80-\xff_]")
CAMEL = re.compile(rb"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")

PROBES = [
    ("getHTTPResponseCode", "pl"),
    ("parse_json_file", "pl"),
    ("Parse the JSON file.", "nl"),
    ("utf8Decode(x)", "pl"),
    ("XMLHttpRequest2Go", "pl"),
    ("  __init__  ", "pl"),
    ("a+=b->c", "pl"),
    ("Returns the maxValue", "nl"),
    ("caféBar", "pl"),
    ("ABC", "pl"),
    ("x1Y2z", "nl"),
]


def split(text: bytes, nl: bool):
    out = []
    for tok in WORD_OR_PUNCT.findall(text):
        parts = [p for p in CAMEL.split(tok) if p] if tok[:1].isalnum() or tok[0] >= 0x80 else [tok]
        out.extend(parts)
    if nl:
        out = [p.lower() if p.isascii() else bytes(c + 32 if 65 <= c <= 90 else c for c in p) for p in out]
    return out


def cpp_string(b: bytes) -> str:
    out, escaped = "", False
    for c in b:
        if 32 <= c < 127 and c not in (34, 92):
            # A hex digit right after \xNN would extend the escape.
            out += ('" "' if escaped and chr(c) in "0123456789abcdefABCDEF" else "") + chr(c)
            escaped = False
        else:
            out += "\\x%02x" % c
            escaped = True
    return '"' + out + '"'


if __name__ == "__main__":
    for text, mode in PROBES:
        toks = split(text.encode("utf-8"), mode == "nl")
        print("{%s, TextMode::%s, {%s}}," % (cpp_string(text.encode("utf-8")), mode, ", ".join(cpp_string(t) for t in toks)))
