import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"


def canonical_json(config) -> str:
    return json.dumps(config, sort_keys=True, separators=(',', ':'), default=str)


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form of a resolved configuration"""
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    seed: Optional[int] = None
    tool_version: str = TOOL_VERSION
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec='seconds'))
    scenarios: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)

    def mark(self, scenario_id, status):
        self.scenarios[str(scenario_id)] = status

    @property
    def failed(self) -> List[str]:
        return [sid for sid, status in self.scenarios.items() if status != "ok"]

    def write(self, path):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
        logger.info(f"Manifest saved to {path}")
        return path
