from __future__ import annotations

import argparse

import uvicorn

from .app import DEFAULT_BATCH_CAP, DEFAULT_MODEL_NAME, ServiceSettings, create_app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-service",
        description="Serve a text encoder (and optional reader) over HTTP",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8901)
    parser.add_argument(
        "--model",
        default=DEFAULT_MODEL_NAME,
        help="model to serve; hf:<checkpoint> loads a local sentence-transformers model",
    )
    parser.add_argument("--dim", type=int, default=64, help="built-in encoder dimension")
    parser.add_argument("--seed", type=int, default=42, help="built-in encoder seed")
    parser.add_argument("--batch-cap", type=int, default=DEFAULT_BATCH_CAP)
    parser.add_argument("--reader", choices=["extractive", "none"], default="extractive")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)

    settings = ServiceSettings(
        model_name=args.model,
        dim=args.dim,
        seed=args.seed,
        batch_cap=args.batch_cap,
        reader=args.reader,
    )
    uvicorn.run(create_app(settings), host=args.host, port=args.port, workers=args.workers)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
