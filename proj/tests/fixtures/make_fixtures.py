"""Regenerates the loader fixtures. The byte layouts are written out by hand
here rather than through any library so the C++ loaders are checked against
an independent encoder."""

import pathlib
import struct

HERE = pathlib.Path(__file__).resolve().parent


def idx_images(count, rows, cols, pixel):
    header = struct.pack(">IIII", 0x00000803, count, rows, cols)
    body = bytes(pixel(n, r, c) for n in range(count) for r in range(rows) for c in range(cols))
    return header + body


def idx_labels(labels):
    return struct.pack(">II", 0x00000801, len(labels)) + bytes(labels)


def cifar_records(labels, pixel):
    out = bytearray()
    for n, label in enumerate(labels):
        out.append(label)
        for ch in range(3):
            for r in range(32):
                for c in range(32):
                    out.append(pixel(n, ch, r, c))
    return bytes(out)


def main():
    # one blank 28x28 digit labelled 7
    (HERE / "idx_one_images.bin").write_bytes(idx_images(1, 28, 28, lambda n, r, c: 0))
    (HERE / "idx_one_labels.bin").write_bytes(idx_labels([7]))
    # three digits with distinct ramps
    (HERE / "idx_three_images.bin").write_bytes(
        idx_images(3, 28, 28, lambda n, r, c: (n * 85 + r * 9 + c) % 256))
    (HERE / "idx_three_labels.bin").write_bytes(idx_labels([3, 0, 9]))
    # ten CIFAR-10 records, labels 0..9
    (HERE / "cifar10_ten.bin").write_bytes(
        cifar_records(list(range(10)), lambda n, ch, r, c: (n * 31 + ch * 64 + r * 7 + c * 3) % 256))


if __name__ == "__main__":
    main()
