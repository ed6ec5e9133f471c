"""Command-line client for the imputation service.

Every command is an HTTP call. By default the service app runs in-process
(no sockets, nothing to start); `--server URL` points the same commands at
a running instance, and `serve` starts one.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.
"""

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

from .config import ExperimentConfig, make_config
from .errors import DataError, DivergenceError, UsageError
from .eval import config_from_kv
from .imputer import MODEL_KINDS

_ERROR_KINDS = {"usage": UsageError, "data": DataError, "divergence": DivergenceError}


class _Parser(argparse.ArgumentParser):
    """argparse exits with its own codes on bad flags; raise instead."""

    def error(self, message):
        raise UsageError(message)


def _class_column(text):
    """Column index when the text is an integer, otherwise a column name."""
    try:
        return int(text)
    except ValueError:
        return text


def _add_config_flags(p):
    p.add_argument("--config", metavar="FILE",
                   help="config file: key=value lines (config.* from a report) or a JSON object")
    p.add_argument("--data", action="append", metavar="CSV", default=None,
                   help="dataset CSV path (repeatable)")
    p.add_argument("--dataset", action="append", choices=sorted(("wisc", "pima", "synth-milk")),
                   default=None, help="built-in dataset id (repeatable)")
    p.add_argument("--class-column", type=_class_column, default=None,
                   help="class column name or index (required for --data files)")
    p.add_argument("--model", action="append", dest="model_kinds",
                   choices=list(MODEL_KINDS), default=None,
                   help="model kind (repeatable; default: all four)")
    p.add_argument("--missing-rate", action="append", dest="missing_rates",
                   type=float, default=None, metavar="RATE",
                   help="fraction of cells to remove, in (0,1) (repeatable)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--dropout", dest="dropout_p", type=float, default=None)
    p.add_argument("--mc-samples", dest="mc_samples", type=int, default=None,
                   help="stochastic decoder passes per imputation")
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--kl-weight", dest="kl_weight", type=float, default=None)
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel grid workers (default 1, bitwise reproducible)")
    p.add_argument("--out", default=None, help="output path (base path for reproduce)")
    p.add_argument("--data-dir", dest="data_dir", default=None,
                   help="directory holding the built-in dataset files")
    p.add_argument("--server", metavar="URL", default=None,
                   help="base URL of a running service (default: in-process)")


def build_parser():
    parser = _Parser(prog="mcdimpute",
                     description="autoencoder multiple imputation for tabular data")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("impute", help="fill the missing cells of a CSV")
    _add_config_flags(p)
    p.add_argument("input", help="CSV with missing cells")
    p.add_argument("--model-file", metavar="JSON", default=None,
                   help="trained model to impute with (otherwise one is trained)")
    p.add_argument("--uncertainty", metavar="FILE", default=None,
                   help="write per-cell MC standard deviations here (MCD kinds only)")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("train", help="train a model and save it as JSON")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reproduce", help="run the full evaluation grid and write report files")
    _add_config_flags(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None


def _write_text(path, text):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from None


def _load_config_file(path):
    text = _read_text(path)
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise DataError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise DataError(f"config file {path} must hold a JSON object")
        return data
    return config_from_kv(text)


# argparse dests that map 1:1 onto ExperimentConfig fields.
_NS_FIELDS = ("class_column", "model_kinds", "missing_rates", "epochs", "dropout_p",
              "mc_samples", "folds", "batch_size", "lr", "kl_weight", "seed",
              "jobs", "out", "data_dir")


def parse_config(ns):
    """Resolve the config: flags override file values override defaults."""
    values = {}
    if ns.config:
        values.update(_load_config_file(ns.config))
    picked = (ns.dataset or []) + (ns.data or [])
    if picked:
        values["dataset"] = tuple(picked)
    for field in _NS_FIELDS:
        v = getattr(ns, field, None)
        if v is not None:
            values[field] = v
    return make_config(values)


class _InProcessTransport(httpx.BaseTransport):
    """Serve each request by running the ASGI app on a private event loop."""

    def __init__(self, app):
        self._transport = httpx.ASGITransport(app=app, raise_app_exceptions=False)

    def handle_request(self, request):
        return asyncio.run(self._handle(request))

    async def _handle(self, request):
        response = await self._transport.handle_async_request(request)
        content = await response.aread()
        await response.aclose()
        # Re-wrap: the ASGI response carries an async stream, the sync
        # client needs a sync one.
        return httpx.Response(status_code=response.status_code,
                              headers=response.headers, content=content,
                              request=request)


def make_client(server=None):
    if server is not None:
        return httpx.Client(base_url=server, timeout=None)
    from .service.app import app

    return httpx.Client(transport=_InProcessTransport(app),
                        base_url="http://mcdimpute.internal", timeout=None)


def _post(client, path, payload):
    """POST and return the JSON body; error bodies become typed exceptions."""
    try:
        response = client.post(path, json=payload)
    except httpx.HTTPError as e:
        raise DataError(f"cannot reach service: {e}") from None
    if response.status_code == 200:
        return response.json()
    try:
        body = response.json()
    except ValueError:
        body = {}
    if isinstance(body, dict) and "code" in body:
        exc = _ERROR_KINDS.get(body["code"], RuntimeError)
        raise exc(body.get("message", ""))
    raise RuntimeError(f"service returned {response.status_code}: {response.text[:200]}")


def _config_payload(cfg):
    return cfg.model_dump(mode="json")


def _single_data_csv(ns):
    """Content of the one --data file, read here so remote servers work."""
    if not ns.data:
        return None
    if len(ns.data) > 1:
        raise UsageError("at most one --data file for this command")
    return _read_text(ns.data[0])


def cmd_train(ns):
    cfg = parse_config(ns)
    if cfg.out is None:
        raise UsageError("--out is required: where to write the trained model")
    train_csv = _single_data_csv(ns)
    if train_csv is not None:
        # The file content travels in the request; drop the path from the
        # config so the service never resolves it.
        cfg = cfg.model_copy(update={"dataset": ()})
    with make_client(ns.server) as client:
        out = _post(client, "/train", {"config": _config_payload(cfg),
                                       "train_csv": train_csv})
    _write_text(cfg.out, json.dumps(out["model"]) + "\n")
    history = out["history"]
    print(f"wrote {cfg.out} ({len(history)} epochs, final loss {history[-1]:.6f})")
    return 0


def cmd_impute(ns):
    cfg = parse_config(ns)
    input_csv = _read_text(ns.input)
    model_json = None
    if ns.model_file is not None:
        try:
            model_json = json.loads(_read_text(ns.model_file))
        except json.JSONDecodeError as e:
            raise DataError(f"model file {ns.model_file} is not valid JSON: {e}") from None
    train_csv = _single_data_csv(ns)
    if train_csv is not None:
        cfg = cfg.model_copy(update={"dataset": ()})
    with make_client(ns.server) as client:
        out = _post(client, "/impute", {"config": _config_payload(cfg),
                                        "input_csv": input_csv,
                                        "model_json": model_json,
                                        "train_csv": train_csv})
    if ns.uncertainty is not None and out["uncertainty"] is None:
        raise UsageError("--uncertainty needs an MCD model kind (mcd-ae or mcd-vae)")
    if cfg.out is not None:
        _write_text(cfg.out, out["completed_csv"])
        print(f"wrote {cfg.out} ({out['imputed_cells']} cells imputed)")
    else:
        sys.stdout.write(out["completed_csv"])
    if ns.uncertainty is not None:
        lines = ["row,column,std"]
        lines += [f"{c['row']},{c['column']},{repr(c['std'])}" for c in out["uncertainty"]]
        _write_text(ns.uncertainty, "\n".join(lines) + "\n")
    return 0


def cmd_reproduce(ns):
    cfg = parse_config(ns)
    with make_client(ns.server) as client:
        out = _post(client, "/reproduce", {"config": _config_payload(cfg)})
    base = cfg.out if cfg.out is not None else "report"
    table_path = f"{base}.txt"
    kv_path = f"{base}.kv"
    _write_text(table_path, out["table_text"])
    _write_text(kv_path, out["kv_text"])
    sys.stdout.write(out["table_text"])
    print(f"wrote {table_path} and {kv_path}")
    return 0


def cmd_serve(ns):
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=ns.host, port=ns.port)
    return 0


def main(argv=None):
    try:
        ns = build_parser().parse_args(argv)
        return ns.func(ns) or 0
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
