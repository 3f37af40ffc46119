"""A deliberately small JSON-Schema dialect for tool parameters.

Tools declare their arguments in a subset of JSON Schema: an object whose
properties are scalars, arrays of scalars, or objects one level deep, plus
``required``, ``enum``, ``description``, and the length bounds ``minLength``/
``minItems``/``maxItems``.  Anything outside the subset is rejected up front
with :class:`UnsupportedSchemaFeature`, never silently accepted, so a schema
imported from elsewhere either means exactly what it says here or fails to
register.

Validation is strict: unknown argument fields are rejected, booleans are not
integers, and errors carry the offending path ("command: expected string").
"""

from __future__ import annotations

from typing import Any, Mapping

from .errors import AgentRtError

SCALAR_TYPES = {"string", "number", "integer", "boolean"}

# Keys that carry no meaning for validation and are dropped on normalize.
# "default" is tolerated but not applied; absent optional fields stay absent.
_COSMETIC_KEYS = {"title", "$schema", "examples", "default"}


class UnsupportedSchemaFeature(AgentRtError):
    """The schema uses something outside the supported dialect."""


class SchemaViolation(AgentRtError):
    """Arguments failed validation; message is ``path: problem``."""

    def __init__(self, path: str, problem: str) -> None:
        super().__init__(f"{path}: {problem}" if path else problem)
        self.path = path
        self.problem = problem


def _reject(path: str, feature: str) -> None:
    where = f" at {path}" if path else ""
    raise UnsupportedSchemaFeature(f"unsupported schema feature{where}: {feature}")


def _check_property(prop: Any, path: str, depth: int) -> None:
    if not isinstance(prop, Mapping):
        _reject(path, "property must be an object")
    for key in ("oneOf", "anyOf", "allOf", "not", "$ref", "patternProperties",
                "additionalProperties", "if", "then", "else"):
        if key in prop:
            _reject(path, key)
    ptype = prop.get("type")
    if ptype is None:
        _reject(path, "missing type")
    if isinstance(ptype, list):
        _reject(path, "type unions")

    known = {"type", "description", "enum"} | _COSMETIC_KEYS
    if ptype in SCALAR_TYPES:
        if ptype == "string":
            known |= {"minLength"}
            if "minLength" in prop and (
                not isinstance(prop["minLength"], int) or prop["minLength"] < 0
            ):
                _reject(path, "minLength must be a non-negative integer")
    elif ptype == "array":
        known |= {"items", "minItems", "maxItems"}
        items = prop.get("items")
        if not isinstance(items, Mapping) or items.get("type") not in SCALAR_TYPES:
            _reject(f"{path}[]", "array items must be a supported scalar type")
        for bound in ("minItems", "maxItems"):
            if bound in prop and (not isinstance(prop[bound], int) or prop[bound] < 0):
                _reject(path, f"{bound} must be a non-negative integer")
        extra_item_keys = set(items) - ({"type", "description", "enum"} | _COSMETIC_KEYS)
        if extra_item_keys:
            _reject(f"{path}[]", ", ".join(sorted(extra_item_keys)))
    elif ptype == "object":
        if depth >= 1:
            _reject(path, "objects nested more than one level deep")
        known |= {"properties", "required"}
        _check_object_body(prop, path, depth + 1)
    else:
        _reject(path, f"type {ptype!r}")

    if "enum" in prop:
        enum = prop["enum"]
        if ptype not in SCALAR_TYPES:
            _reject(path, "enum on non-scalar")
        if not isinstance(enum, list) or not enum:
            _reject(path, "enum must be a non-empty list")

    unknown = set(prop) - known
    if unknown:
        _reject(path, ", ".join(sorted(unknown)))


def _check_object_body(schema: Mapping[str, Any], path: str, depth: int) -> None:
    properties = schema.get("properties", {})
    if not isinstance(properties, Mapping):
        _reject(path, "properties must be an object")
    for name, prop in properties.items():
        child = f"{path}.{name}" if path else name
        _check_property(prop, child, depth)
    required = schema.get("required", [])
    if not isinstance(required, list) or not all(isinstance(r, str) for r in required):
        _reject(path, "required must be a list of property names")
    for name in required:
        if name not in properties:
            _reject(path, f"required names unknown property {name!r}")


def check_schema(schema: Mapping[str, Any]) -> None:
    """Verify a parameter schema sits inside the supported dialect."""
    if not isinstance(schema, Mapping):
        _reject("", "schema must be an object")
    if schema.get("type") != "object":
        _reject("", "top-level type must be 'object'")
    if schema.get("additionalProperties") not in (None, False):
        _reject("", "additionalProperties")
    unknown = set(schema) - ({"type", "properties", "required", "description",
                              "additionalProperties"} | _COSMETIC_KEYS)
    if unknown:
        _reject("", ", ".join(sorted(unknown)))
    _check_object_body(schema, "", 0)


def _normalize_property(prop: Mapping[str, Any]) -> dict:
    out: dict[str, Any] = {"type": prop["type"]}
    if "description" in prop:
        out["description"] = prop["description"]
    if "enum" in prop:
        out["enum"] = list(prop["enum"])
    if "minLength" in prop:
        out["minLength"] = prop["minLength"]
    if prop["type"] == "array":
        items = prop["items"]
        out["items"] = {
            k: (list(v) if k == "enum" else v)
            for k, v in items.items()
            if k in ("type", "description", "enum")
        }
        for bound in ("minItems", "maxItems"):
            if bound in prop:
                out[bound] = prop[bound]
    elif prop["type"] == "object":
        out["properties"] = {
            name: _normalize_property(sub)
            for name, sub in prop.get("properties", {}).items()
        }
        if prop.get("required"):
            out["required"] = list(prop["required"])
    return out


def normalize_schema(schema: Mapping[str, Any]) -> dict:
    """Canonical form: cosmetic keys dropped, key order made predictable.

    The result round-trips: ``normalize(normalize(s)) == normalize(s)``, and
    two schemas that validate identically normalize identically.
    """
    check_schema(schema)
    out: dict[str, Any] = {"type": "object"}
    if "description" in schema:
        out["description"] = schema["description"]
    out["properties"] = {
        name: _normalize_property(prop)
        for name, prop in schema.get("properties", {}).items()
    }
    if schema.get("required"):
        out["required"] = list(schema["required"])
    return out


def _type_ok(expected: str, value: Any) -> bool:
    if expected == "string":
        return isinstance(value, str)
    if expected == "boolean":
        return isinstance(value, bool)
    if expected == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if expected == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return False


def _validate_value(prop: Mapping[str, Any], value: Any, path: str) -> Any:
    ptype = prop["type"]
    if ptype in SCALAR_TYPES:
        if not _type_ok(ptype, value):
            raise SchemaViolation(path, f"expected {ptype}")
        if "enum" in prop and value not in prop["enum"]:
            raise SchemaViolation(
                path, f"must be one of {prop['enum']!r}, got {value!r}"
            )
        if ptype == "string" and len(value) < prop.get("minLength", 0):
            raise SchemaViolation(
                path, f"must be at least {prop['minLength']} characters"
            )
        return value
    if ptype == "array":
        if not isinstance(value, list):
            raise SchemaViolation(path, "expected array")
        if len(value) < prop.get("minItems", 0):
            raise SchemaViolation(path, f"must have at least {prop['minItems']} items")
        if "maxItems" in prop and len(value) > prop["maxItems"]:
            raise SchemaViolation(path, f"must have at most {prop['maxItems']} items")
        items = prop["items"]
        return [
            _validate_value(items, item, f"{path}[{i}]")
            for i, item in enumerate(value)
        ]
    if ptype == "object":
        return _validate_object(prop, value, path)
    raise SchemaViolation(path, f"unhandled type {ptype!r}")  # pragma: no cover


def _validate_object(schema: Mapping[str, Any], value: Any, path: str) -> dict:
    if not isinstance(value, Mapping):
        raise SchemaViolation(path, "expected object")
    properties = schema.get("properties", {})
    out: dict[str, Any] = {}
    for name in value:
        if name not in properties:
            child = f"{path}.{name}" if path else str(name)
            raise SchemaViolation(child, "unknown field")
    for name in schema.get("required", []):
        if name not in value:
            child = f"{path}.{name}" if path else name
            raise SchemaViolation(child, "required")
    for name, item in value.items():
        child = f"{path}.{name}" if path else name
        out[name] = _validate_value(properties[name], item, child)
    return out


def validate_args(schema: Mapping[str, Any], raw: Any) -> dict:
    """Validate raw arguments against a (checked) schema.

    Returns a plain dict of validated values.  No coercion happens beyond
    copying; in particular booleans never pass as integers and missing
    optional fields stay missing.
    """
    return _validate_object(schema, raw, "")
