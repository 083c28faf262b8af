"""Regenerates the golden NPY and NIfTI fixtures.

Run from this directory: python3 generate.py
"""

import struct

import numpy as np

SHAPE = (2, 3, 4)


def golden_npy():
    base = np.arange(24).reshape(SHAPE)
    arrays = {
        "f64": base * 0.5 - 3.25,
        "f32": (base * 0.25 - 1.5).astype(np.float32),
        "f16": (base * 0.125 - 1.0).astype(np.float16),
        "i16": (base * 300 - 3000).astype(np.int16),
        "i8": (base * 5 - 60).astype(np.int8),
        "u8": (base * 10).astype(np.uint8),
    }
    for name, arr in arrays.items():
        np.save(f"golden_{name}.npy", arr)


def nifti_header(dims, datatype, bitpix, slope, inter, magic, endian, vox_offset):
    nx, ny, nz = dims
    h = bytearray(348)
    struct.pack_into(endian + "i", h, 0, 348)
    struct.pack_into(endian + "8h", h, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into(endian + "h", h, 70, datatype)
    struct.pack_into(endian + "h", h, 72, bitpix)
    struct.pack_into(endian + "8f", h, 76, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into(endian + "f", h, 108, vox_offset)
    struct.pack_into(endian + "f", h, 112, slope)
    struct.pack_into(endian + "f", h, 116, inter)
    h[344:348] = magic
    return bytes(h)


def voxel(x, y, z):
    return x + 10 * y + 100 * z


def nifti():
    nx, ny, nz = 4, 3, 2
    order = [(x, y, z) for z in range(nz) for y in range(ny) for x in range(nx)]

    # little-endian int16 with scaling 2v + 1
    hdr = nifti_header((nx, ny, nz), 4, 16, 2.0, 1.0, b"n+1\0", "<", 352.0)
    body = b"".join(struct.pack("<h", voxel(*p)) for p in order)
    with open("scaled_i16_le.nii", "wb") as f:
        f.write(hdr + b"\0" * 4 + body)

    # big-endian float32, unscaled, value v / 4
    hdr = nifti_header((nx, ny, nz), 16, 32, 0.0, 0.0, b"n+1\0", ">", 352.0)
    body = b"".join(struct.pack(">f", voxel(*p) / 4) for p in order)
    with open("plain_f32_be.nii", "wb") as f:
        f.write(hdr + b"\0" * 4 + body)

    # header/image pair, uint8
    hdr = nifti_header((nx, ny, nz), 2, 8, 0.0, 0.0, b"ni1\0", "<", 0.0)
    with open("pair_u8.hdr", "wb") as f:
        f.write(hdr)
    with open("pair_u8.img", "wb") as f:
        f.write(bytes(voxel(*p) % 256 for p in order))


if __name__ == "__main__":
    golden_npy()
    nifti()
