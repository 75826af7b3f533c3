"""Builds the inletctl_py extension by delegating to cargo.

The extension is a plain cdylib produced by the crates/py package; this
shim renames it to the platform-specific module filename so setuptools
can install it like any other compiled extension.
"""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

ROOT = Path(__file__).resolve().parent


class CargoBuildExt(build_ext):
    def build_extension(self, ext):
        subprocess.run(
            ["cargo", "build", "--release", "-p", "inletctl-py"],
            cwd=ROOT,
            check=True,
        )
        if sys.platform == "darwin":
            lib = "libinletctl_py.dylib"
        elif sys.platform == "win32":
            lib = "inletctl_py.dll"
        else:
            lib = "libinletctl_py.so"
        src = ROOT / "target" / "release" / lib
        dst = Path(self.get_ext_fullpath(ext.name))
        dst.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(src, dst)


setup(
    ext_modules=[Extension("inletctl_py", sources=[])],
    cmdclass={"build_ext": CargoBuildExt},
)
