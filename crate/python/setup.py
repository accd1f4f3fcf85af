"""Builds the native extension by delegating to cargo.

setuptools-rust and maturin are deliberately avoided so the only build
requirements are setuptools and a Rust toolchain.
"""

import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

WORKSPACE = Path(__file__).resolve().parent.parent


class CargoExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CargoBuild(build_ext):
    def build_extension(self, ext):
        subprocess.run(
            [
                "cargo",
                "build",
                "--release",
                "-p",
                "rating-influence-py",
                "--features",
                "extension-module",
            ],
            cwd=WORKSPACE,
            check=True,
        )
        built = WORKSPACE / "target" / "release" / "librating_influence_py.so"
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, dest)


setup(
    ext_modules=[CargoExtension("rating_influence._native")],
    cmdclass={"build_ext": CargoBuild},
)
