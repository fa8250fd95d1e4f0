"""Run the embedding sidecar: python -m embed_service [--host H] [--port P].

The encoder is chosen by --model or the EMBED_MODEL environment variable;
use toy://dim=512 for the offline deterministic encoder.
"""
import argparse

import uvicorn

from .app import create_app


def main() -> None:
    parser = argparse.ArgumentParser(prog="embed_service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8090)
    parser.add_argument("--model", default=None,
                        help="encoder spec; defaults to $EMBED_MODEL")
    parser.add_argument("--max-chars", type=int, default=10_000)
    args = parser.parse_args()
    app = create_app(model_spec=args.model, max_chars=args.max_chars)
    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
