"""Command-line interface.

The CLI is a thin HTTP client: every subcommand builds a request body and
posts it to the service API. By default the app is mounted in-process (no
socket, same behavior); pass ``--server URL`` to talk to a running server
instead. Config precedence is flags > config file > built-in defaults; the
server snapshots whatever it receives into the run directory.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path

import click
import httpx

HP_FLAGS = ("seed", "phi", "gamma", "c", "sv_close", "wr_close", "sh_close",
            "lr", "max_epochs", "smo_tol", "widths")


class ApiClient:
    """Posts to a remote server, or straight into the ASGI app in-process."""

    def __init__(self, server: str | None):
        self.server = server

    def post(self, path: str, body: dict) -> dict:
        if self.server is None:
            response = self._post_inprocess(path, body)
        else:
            try:
                with httpx.Client(base_url=self.server, timeout=None) as client:
                    response = client.post(path, json=body)
            except httpx.HTTPError as exc:
                raise click.ClickException(f"cannot reach {self.server}: {exc}")
        if response.status_code != 200:
            raise click.ClickException(_error_line(response))
        return response.json()

    def _post_inprocess(self, path: str, body: dict) -> httpx.Response:
        from .service.app import app

        async def go():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://lmfcn",
                                         timeout=None) as client:
                return await client.post(path, json=body)

        return asyncio.run(go())


def _error_line(response: httpx.Response) -> str:
    try:
        payload = response.json()
    except ValueError:
        return f"HTTP {response.status_code}"
    detail = payload.get("detail")
    if isinstance(detail, str):
        return detail
    if isinstance(detail, list) and detail:      # pydantic validation errors
        first = detail[0]
        where = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        return f"invalid request: {where}: {first.get('msg', 'invalid')}"
    return f"HTTP {response.status_code}"


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise click.ClickException(f"cannot read config {path}: {exc}")
    if not isinstance(config, dict):
        raise click.ClickException(f"config {path} must be a JSON object")
    return config


def _train_body(data, out, config_path, val_ratio, split_seed, **flags) -> dict:
    """Merge: explicit flags > config file > nothing (server defaults)."""
    config = _load_config(config_path)
    hp = dict(config.get("hyperparams", {}))
    for name in HP_FLAGS:
        if flags.get(name) is not None:
            hp[name] = flags[name]
    body = {"data_dir": str(data), "out_dir": str(out), "hyperparams": hp}
    for name, value in (("val_ratio", val_ratio), ("split_seed", split_seed)):
        if value is not None:
            body[name] = value
        elif name in config:
            body[name] = config[name]
    return body, config


def hp_options(fn):
    decorators = [
        click.option("--seed", type=int, default=None, help="RNG seed."),
        click.option("--phi", type=int, default=None,
                     help="Latent width of the conv stack."),
        click.option("--gamma", type=float, default=None,
                     help="RBF gamma; omit for the per-epoch median heuristic."),
        click.option("--c", type=float, default=None, help="SVM box constraint."),
        click.option("--sv-close", type=int, default=None,
                     help="Anchors per support vector."),
        click.option("--wr-close", type=int, default=None,
                     help="Anchors per misclassified instance."),
        click.option("--sh-close", type=int, default=None,
                     help="Anchors per well-classified instance."),
        click.option("--epochs", "max_epochs", type=int, default=None,
                     help="Epoch budget."),
        click.option("--lr", type=float, default=None, help="Adam step size."),
        click.option("--config", "config_path", default=None,
                     type=click.Path(exists=True, dir_okay=False),
                     help="JSON config; flags given here override it."),
        click.option("--val-ratio", type=float, default=None,
                     help="Fraction of the dataset held out for validation."),
        click.option("--split-seed", type=int, default=None,
                     help="Split shuffling seed (defaults to --seed)."),
        click.option("--data", required=True,
                     type=click.Path(exists=True, file_okay=False),
                     help="Dataset directory (class_N subdirectories)."),
        click.option("--out", required=True, help="Run directory to create."),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx, server):
    """Train and evaluate margin-guided convolutional texture classifiers."""
    ctx.obj = ApiClient(server)


@main.command("gen-data")
@click.option("--out", required=True, help="Dataset directory to create.")
@click.option("--n-per-class", type=int, default=100, show_default=True)
@click.option("--size", type=int, default=64, show_default=True,
              help="Image side length in pixels.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--specs", "specs_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON list of per-class stripe specs; default is two "
                   "classes at 30 and 60 degrees.")
@click.pass_obj
def gen_data(client, out, n_per_class, size, seed, specs_path):
    """Generate a synthetic stripe-texture dataset."""
    body = {"out_dir": str(out), "n_per_class": n_per_class, "size": size,
            "seed": seed}
    if specs_path is not None:
        try:
            specs = json.loads(Path(specs_path).read_text())
        except (OSError, ValueError) as exc:
            raise click.ClickException(f"cannot read specs {specs_path}: {exc}")
        if not isinstance(specs, list):
            raise click.ClickException(f"specs {specs_path} must be a JSON list")
        body["specs"] = specs
    result = client.post("/datasets", body)
    click.echo(f"wrote {result['n_images']} images "
               f"({result['n_classes']} classes) to {result['out_dir']}")


def _echo_train(result: dict) -> None:
    parts = [f"run {result['run_dir']}"]
    if result.get("best_epoch") is not None:
        parts.append(f"best epoch {result['best_epoch']}")
    if result.get("latent_width") is not None:
        parts.append(f"latent width {result['latent_width']}")
    parts.append(f"val bacc {result['val_bacc']:.4f}")
    parts.append(f"train bacc {result['train_bacc']:.4f}")
    click.echo(", ".join(parts))


@main.command("train")
@hp_options
@click.option("--debug-dump", is_flag=True,
              help="Dump per-epoch distance/kernel matrices and anchor "
                   "tables as CSV under <run>/debug.")
@click.pass_obj
def train(client, data, out, config_path, val_ratio, split_seed, debug_dump,
          **flags):
    """Train the margin-guided model on a two-class dataset."""
    body, _ = _train_body(data, out, config_path, val_ratio, split_seed, **flags)
    body["debug_dump"] = debug_dump
    _echo_train(client.post("/runs/train", body))


@main.command("train-multiclass")
@hp_options
@click.option("--sub-epochs", type=int, default=None,
              help="Epoch budget per one-vs-all sub-problem (default 10).")
@click.pass_obj
def train_multiclass(client, data, out, config_path, val_ratio, split_seed,
                     sub_epochs, **flags):
    """Train one-vs-all on a dataset with three or more classes."""
    body, config = _train_body(data, out, config_path, val_ratio, split_seed,
                               **flags)
    if sub_epochs is not None:
        body["sub_epochs"] = sub_epochs
    elif "sub_epochs" in config:
        body["sub_epochs"] = config["sub_epochs"]
    _echo_train(client.post("/runs/train-multiclass", body))


@main.command("train-cnn-baseline")
@hp_options
@click.option("--stop-when-val-perfect", is_flag=True,
              help="End early once validation balanced accuracy hits 1.0.")
@click.pass_obj
def train_cnn_baseline(client, data, out, config_path, val_ratio, split_seed,
                       stop_when_val_perfect, **flags):
    """Train the cross-entropy CNN baseline (same conv stack, FC head)."""
    body, _ = _train_body(data, out, config_path, val_ratio, split_seed, **flags)
    body["stop_when_val_perfect"] = stop_when_val_perfect
    _echo_train(client.post("/runs/train-cnn-baseline", body))


@main.command("train-lbp-baseline")
@hp_options
@click.pass_obj
def train_lbp_baseline(client, data, out, config_path, val_ratio, split_seed,
                       **flags):
    """Train the local-binary-pattern + SVM baseline."""
    body, _ = _train_body(data, out, config_path, val_ratio, split_seed, **flags)
    _echo_train(client.post("/runs/train-lbp-baseline", body))


@main.command("eval")
@click.option("--run", "run_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Run directory holding checkpoint.bin.")
@click.option("--data", "data_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Dataset directory to score.")
@click.option("--out", default=None,
              help="Where to write the report JSON (default <run>/eval.json).")
@click.pass_obj
def eval_cmd(client, run_dir, data_dir, out):
    """Evaluate a run's checkpoint on a dataset."""
    out = out if out is not None else str(Path(run_dir) / "eval.json")
    result = client.post("/evaluations", {"run_dir": str(run_dir),
                                          "data_dir": str(data_dir),
                                          "out_path": out})
    click.echo(f"balanced accuracy {result['balanced_accuracy']:.4f} "
               f"on {result['n_instances']} instances -> {out}")


@main.command("report")
@click.option("--run", "run_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Run directory holding epochs.csv.")
@click.option("--out", default=None,
              help="Where to write the CSV (default <run>/report.csv).")
@click.pass_obj
def report(client, run_dir, out):
    """Extract plot-ready per-epoch series from a run's log."""
    out = out if out is not None else str(Path(run_dir) / "report.csv")
    result = client.post("/reports", {"run_dir": str(run_dir),
                                      "out_path": out})
    click.echo(f"wrote {len(result['rows'])} epochs to {out}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import app
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
