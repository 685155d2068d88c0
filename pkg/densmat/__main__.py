from densmat.cli import cli

cli()
