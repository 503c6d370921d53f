"""Write the canonical fixture modules to a directory as .wasm files.

    python scripts/make_fixtures.py out/
    twinehost run out/hello.wasm
"""
import argparse
from pathlib import Path

from twinehost.engine import fixtures


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir", type=Path)
    args = ap.parse_args()
    args.outdir.mkdir(parents=True, exist_ok=True)
    mods = dict(fixtures.ALL)
    mods["write_gap"] = lambda: fixtures.write_file(b"gap.bin", b"A", seek_to=4096)
    for name, make in mods.items():
        path = args.outdir / f"{name}.wasm"
        path.write_bytes(make())
        print(path)


if __name__ == "__main__":
    main()
