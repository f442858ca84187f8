"""Run the scorer service from the command line."""

import argparse
import signal
import sys

from .server import ServiceConfig, serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mtf-scorer-service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8787)
    parser.add_argument("--latency-ms", type=int, default=0,
                        help="artificial per-call latency, for concurrency testing")
    args = parser.parse_args(argv)

    service = serve(ServiceConfig(host=args.host, port=args.port, latency_ms=args.latency_ms))
    print(f"scorer service listening on {service.url}", flush=True)
    try:
        signal.pause()
    except (KeyboardInterrupt, AttributeError):
        pass
    finally:
        service.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
