"""Trainer command line: ``trainer train`` and ``trainer predict``."""

import click

from . import predict as predict_mod
from . import train as train_mod


@click.group()
def main():
    """Reference segmentation backend over the dataset manifest contract."""


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_ckpt", type=click.Path(), required=True)
@click.option("--epochs", type=int, default=None, help="Override the manifest's epochs")
@click.option("--lr", type=float, default=None, help="Override the learning rate")
@click.option("--backbone", type=click.Choice(["resnet", "xception"]), default=None)
@click.option("--batch-size", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--no-class-weights", is_flag=True, default=False)
@click.option("--log", "log_path", type=click.Path(), default=None)
def train(manifest_path, out_ckpt, epochs, lr, backbone, batch_size, seed,
          no_class_weights, log_path):
    """Fine-tune the network on the manifest's training tiles."""
    overrides = {"epochs": epochs, "learning_rate": lr, "backbone": backbone}
    ckpt, log = train_mod.train(
        manifest_path,
        out_ckpt,
        overrides=overrides,
        batch_size=batch_size,
        seed=seed,
        use_class_weights=not no_class_weights,
        log_path=log_path,
    )
    click.echo(f"checkpoint written to {ckpt}")
    for entry in log:
        click.echo(f"epoch {entry['epoch']}: loss {entry['mean_loss']:.4f} "
                   f"({entry['seconds']}s)")


@main.command()
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_opt", type=click.Path(exists=True), default=None)
@click.option("--out", "out_opt", type=click.Path(), default=None)
@click.argument("manifest_arg", required=False, type=click.Path(exists=True))
@click.argument("outdir_arg", required=False, type=click.Path())
def predict(ckpt_path, manifest_opt, out_opt, manifest_arg, outdir_arg):
    """Write prediction tiles for the manifest's test tiles.

    The manifest and output directory may come as options or as trailing
    arguments; the latter form is how the pipeline's external-backend
    runner invokes any backend command.
    """
    manifest_path = manifest_arg or manifest_opt
    outdir = outdir_arg or out_opt
    if not manifest_path or not outdir:
        raise click.UsageError("need a manifest and an output directory")
    written = predict_mod.predict(ckpt_path, manifest_path, outdir)
    click.echo(f"wrote {len(written)} prediction tiles to {outdir}")


if __name__ == "__main__":
    main()
