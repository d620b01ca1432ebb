from typing import Iterable, List, Optional, Type, TypeVar
import hashlib
import os
import logging

from pydantic import BaseModel

from . import __version__
from .config import RunConfig
from .models import RunManifest

M = TypeVar("M", bound=BaseModel)

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def digest(data: bytes) -> str:
    """SHA-256 digest of some content

    >>> digest(b"")[:16]
    'e3b0c44298fc1c14'
    """
    return hashlib.sha256(data).hexdigest()


class Store:
    """Output directory of a run"""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def exists(self, name: str) -> bool:
        return os.path.exists(self.path(name))

    def write_text(self, name: str, text: str) -> str:
        """Write a file and return the digest of its content"""
        # Ensure the folder exists
        os.makedirs(self.out_dir, exist_ok=True)

        data = text.encode()
        with open(self.path(name), "wb") as fout:
            logger.debug(f"Writing {name=}")
            fout.write(data)
        return digest(data)

    def read_text(self, name: str) -> str:
        with open(self.path(name)) as fin:
            return fin.read()

    def write_records(self, name: str, records: Iterable[BaseModel]) -> str:
        """Write records as line delimited JSON"""
        lines = [record.model_dump_json() + "\n" for record in records]
        return self.write_text(name, "".join(lines))

    def read_records(self, name: str, model: Type[M]) -> List[M]:
        return read_records(self.path(name), model)

    def digest(self, name: str) -> str:
        with open(self.path(name), "rb") as fin:
            return digest(fin.read())

    def manifest(self) -> Optional[RunManifest]:
        if not self.exists(MANIFEST):
            return None
        return RunManifest.model_validate_json(self.read_text(MANIFEST))

    def record(
        self, command: str, config: RunConfig, names: Iterable[str]
    ) -> RunManifest:
        """Add the digests of the outputs of a command to the manifest

        Outputs of other commands are kept as long as the configuration did
        not change.
        """
        manifest = self.manifest()
        if manifest is None or manifest.config != config:
            if manifest is not None:
                msg = f"Configuration changed, starting a new manifest in {self.out_dir}"
                logger.warning(msg)
            manifest = RunManifest(version=__version__, config=config)

        outputs = dict(manifest.outputs)
        outputs[command] = {name: self.digest(name) for name in sorted(names)}
        manifest = RunManifest(version=__version__, config=config, outputs=outputs)
        self.write_text(MANIFEST, manifest.model_dump_json(indent=1) + "\n")
        return manifest


def read_records(path: str, model: Type[M]) -> List[M]:
    """Read line delimited JSON records"""
    with open(path) as fin:
        return [model.model_validate_json(line) for line in fin if line.strip()]
