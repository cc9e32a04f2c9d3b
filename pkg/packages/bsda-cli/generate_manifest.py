#!/usr/bin/env python3
"""
Introspection manifest generator for the bsda-cli package.

Walks the click app and writes manifest.json (command names, first help
line, parameters) next to the package sources.

Usage:
    python generate_manifest.py
"""

import json
import sys
from pathlib import Path
from typing import Any

import click

SCRIPT_DIR = Path(__file__).parent
SRC_DIR = SCRIPT_DIR / "src" / "bsda_cli"
MANIFEST_PATH = SRC_DIR / "manifest.json"


def introspect_parameter(param: click.Parameter) -> dict[str, Any] | None:
    """Parameter metadata; hidden test hooks and --help are skipped."""
    if not isinstance(param, click.Option) or param.name == "help" or getattr(param, "hidden", False):
        return None
    result = {
        "name": param.name,
        "flags": list(param.opts),
        "type": "flag" if param.is_flag else param.type.name,
        "required": param.required,
        "description": param.help or "",
    }
    if param.default is not None and param.default is not False:
        try:
            json.dumps(param.default)
            result["default"] = param.default
        except (TypeError, ValueError):
            pass
    return result


def introspect_command(cmd: click.Command) -> dict[str, Any]:
    description = (cmd.help or "").split("\n")[0]
    parameters = [info for info in (introspect_parameter(p) for p in cmd.params) if info]
    return {"name": cmd.name, "description": description, "parameters": parameters}


def introspect_click_app(group: click.Group, name: str, command: str) -> dict[str, Any]:
    return {
        "name": name,
        "type": "cli",
        "description": group.help or "",
        "command": command,
        "global_options": [info for info in (introspect_parameter(p) for p in group.params) if info],
        "actions": [introspect_command(cmd) for cmd in group.commands.values()],
        "documentation": {
            "usage": f"{command} [--seed N] <command> [options]",
            "examples": [
                f"{command} --seed 7 synth --out data",
                f"{command} train --data data --out runs/full",
                f"{command} eval --checkpoint runs/full/model.bsdc --data data --out runs/full",
                f"{command} gradcheck",
            ],
        },
    }


def main():
    """Generate manifest.json from CLI introspection."""
    sys.path.insert(0, str(SRC_DIR.parent))
    try:
        from bsda_cli.main import app
    except ImportError as e:
        print(f"Error: Could not import CLI app: {e}", file=sys.stderr)
        print("Make sure dependencies are installed: pip install -e .", file=sys.stderr)
        return 1

    manifest = introspect_click_app(app, name="bsda", command="bsda-cli")
    print(f"Found {len(manifest['actions'])} commands")
    MANIFEST_PATH.write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"Wrote {MANIFEST_PATH}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
