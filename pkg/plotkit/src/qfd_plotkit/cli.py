"""qfd-plot <spec.toml>: render one figure from a qfd artifact directory."""

import argparse
import sys

from .render import PlotSpec, PlotSpecError, render


def main(argv=None):
    parser = argparse.ArgumentParser(prog="qfd-plot",
                                     description="qfd artifact figure renderer")
    parser.add_argument("spec", help="TOML plot specification")
    args = parser.parse_args(argv)
    try:
        spec = PlotSpec.from_toml(args.spec)
        paths = render(spec)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PlotSpecError as exc:
        print(f"plot spec error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
