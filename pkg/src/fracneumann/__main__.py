from fracneumann.cli import fracneumann

fracneumann()
