#!/usr/bin/env python3
"""Print the .text words of an ELF64 little-endian object, one `0x%08x  # source line` per line."""
import struct
import sys


def text_section(data):
    assert data[:4] == b"\x7fELF" and data[4] == 2 and data[5] == 1
    shoff, = struct.unpack_from("<Q", data, 0x28)
    shentsize, shnum, shstrndx = struct.unpack_from("<HHH", data, 0x3A)
    sections = []
    for i in range(shnum):
        base = shoff + i * shentsize
        name, _typ = struct.unpack_from("<II", data, base)
        off, size = struct.unpack_from("<QQ", data, base + 0x18)
        sections.append((name, off, size))
    _, stroff, _ = sections[shstrndx]
    for name, off, size in sections:
        end = data.index(b"\0", stroff + name)
        if data[stroff + name:end] == b".text":
            return data[off:off + size]
    raise SystemExit("no .text")


def main():
    obj, src = sys.argv[1], sys.argv[2]
    text = text_section(open(obj, "rb").read())
    lines = [l.strip() for l in open(src) if l.strip() and not l.lstrip().startswith(("#", "."))]
    words = struct.unpack("<%dI" % (len(text) // 4), text)
    assert len(words) == len(lines), (len(words), len(lines))
    for w, l in zip(words, lines):
        print("0x%08x  # %s" % (w, l))


if __name__ == "__main__":
    main()
