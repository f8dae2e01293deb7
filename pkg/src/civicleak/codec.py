"""JSON encoding of service requests and results (wire schema v1).

The same typed bodies are used on the HTTP binding and in outcome logs, so a
logged run can be compared line by line with a wire-served one.
"""

from __future__ import annotations

import datetime as dt
from typing import Any

from .defense import Challenge
from .model import Address, BusinessIndicator, DocMetadata, PublishedDocument
from .registry import (
    CATEGORY1_REFUSAL,
    NEEDS_MORE_INFO,
    NOT_FOUND,
    UNREGISTERED,
    ErrorKind,
    RequestContext,
    ServiceError,
    TrnRecord,
    VoterResult,
)

WIRE_VERSION = 1

# HTTP status per error kind; the two "soft" refusals travel as typed 200 bodies.
STATUS = {
    ErrorKind.RATE_LIMITED: 429,
    ErrorKind.LOCKED_OUT: 423,
    ErrorKind.CAPTCHA_REQUIRED: 403,
    ErrorKind.NOT_FOUND: 404,
    ErrorKind.UNREGISTERED: 404,
    ErrorKind.INVALID_FORMAT: 422,
    ErrorKind.CATEGORY1_REFUSAL: 200,
    ErrorKind.NEEDS_MORE_INFO: 200,
}

_TYPED_200 = {
    ErrorKind.CATEGORY1_REFUSAL: "category1_refusal",
    ErrorKind.NEEDS_MORE_INFO: "needs_more_info",
}
_SINGLETONS = {
    ErrorKind.CATEGORY1_REFUSAL: CATEGORY1_REFUSAL,
    ErrorKind.NEEDS_MORE_INFO: NEEDS_MORE_INFO,
    ErrorKind.NOT_FOUND: NOT_FOUND,
    ErrorKind.UNREGISTERED: UNREGISTERED,
}


class CodecError(ValueError):
    pass


def _date(s: str | None) -> dt.date | None:
    return dt.date.fromisoformat(s) if s else None


# --- contexts -----------------------------------------------------------------


def ctx_to_json(ctx: RequestContext) -> dict[str, Any]:
    return {
        "source_ip": ctx.source_ip,
        "time": ctx.time,
        "session_id": ctx.session_id,
        "captcha_token": ctx.captcha_token,
    }


def ctx_from_json(d: dict[str, Any]) -> RequestContext:
    try:
        ip, t = d["source_ip"], d["time"]
    except (KeyError, TypeError):
        raise CodecError("ctx needs source_ip and time") from None
    if not isinstance(ip, str) or isinstance(t, bool) or not isinstance(t, int):
        raise CodecError("ctx.source_ip must be a string and ctx.time an integer")
    return RequestContext(ip, t, d.get("session_id"), d.get("captcha_token"))


# --- results ------------------------------------------------------------------


def trn_record_to_json(r: TrnRecord) -> dict[str, Any]:
    a = r.address
    return {
        "trn": r.trn,
        "last_name": r.last_name,
        "first_name": r.first_name,
        "father_name": r.father_name,
        "commercial_title": r.commercial_title,
        "address": {"street": a.street, "number": a.number, "postal_code": a.postal_code, "city": a.city},
        "registration_date": r.registration_date.isoformat(),
        "stop_date": r.stop_date.isoformat() if r.stop_date else None,
        "phone": r.phone,
        "fax": r.fax,
        "business_activity": r.business_activity,
        "physical_entity": r.physical_entity,
        "tax_bureau": r.tax_bureau,
        "active_trn": r.active_trn,
        "business_indicator": r.business_indicator.value,
    }


def trn_record_from_json(d: dict[str, Any]) -> TrnRecord:
    return TrnRecord(
        trn=d["trn"],
        last_name=d["last_name"],
        first_name=d["first_name"],
        father_name=d["father_name"],
        commercial_title=d["commercial_title"],
        address=Address(**d["address"]),
        registration_date=_date(d["registration_date"]),
        stop_date=_date(d["stop_date"]),
        phone=d["phone"],
        fax=d["fax"],
        business_activity=d["business_activity"],
        physical_entity=d["physical_entity"],
        tax_bureau=d["tax_bureau"],
        active_trn=d["active_trn"],
        business_indicator=BusinessIndicator(d["business_indicator"]),
    )


def result_to_json(result: Any) -> dict[str, Any]:
    """Typed body for any service result."""
    if isinstance(result, ServiceError):
        if result.kind in _TYPED_200:
            return {"type": _TYPED_200[result.kind]}
        body: dict[str, Any] = {"type": "error", "error": result.kind.value}
        if result.retry_after is not None:
            body["retry_after"] = result.retry_after
        if result.challenge is not None:
            body["challenge"] = {"id": result.challenge.id, "cost": result.challenge.cost}
        if result.detail:
            body["detail"] = result.detail
        return body
    if isinstance(result, TrnRecord):
        return {"type": "trn_record", **trn_record_to_json(result)}
    if isinstance(result, VoterResult):
        return {
            "type": "voter_result",
            "electoral_center": result.electoral_center,
            "registrar_info": result.registrar_info,
            "mother_name": result.mother_name,
            "birth_year": result.birth_year,
        }
    if isinstance(result, str):
        return {"type": "amka", "amka": result}
    if isinstance(result, list):
        return {"type": "doc_ids", "ids": list(result)}
    if isinstance(result, PublishedDocument):
        m = result.metadata
        return {
            "type": "document",
            "id": result.id,
            "text": result.text,
            "metadata": {
                "author": m.author,
                "modification_date": m.modification_date.isoformat(),
                "publishing_org": m.publishing_org,
            },
        }
    raise CodecError(f"cannot encode {type(result).__name__}")


def result_from_json(body: dict[str, Any]) -> Any:
    kind = body.get("type")
    if kind == "error":
        ek = ErrorKind(body["error"])
        if ek in _SINGLETONS and len(body) == 2:
            return _SINGLETONS[ek]
        ch = body.get("challenge")
        return ServiceError(
            ek,
            retry_after=body.get("retry_after"),
            challenge=Challenge(ch["id"], ch["cost"]) if ch else None,
            detail=body.get("detail", ""),
        )
    if kind == "category1_refusal":
        return CATEGORY1_REFUSAL
    if kind == "needs_more_info":
        return NEEDS_MORE_INFO
    if kind == "trn_record":
        return trn_record_from_json({k: v for k, v in body.items() if k != "type"})
    if kind == "voter_result":
        return VoterResult(body["electoral_center"], body["registrar_info"], body["mother_name"], body["birth_year"])
    if kind == "amka":
        return body["amka"]
    if kind == "doc_ids":
        return list(body["ids"])
    if kind == "document":
        m = body["metadata"]
        return PublishedDocument(
            body["id"], body["text"], DocMetadata(m["author"], _date(m["modification_date"]), m["publishing_org"])
        )
    raise CodecError(f"unknown result type {kind!r}")


def status_of(result: Any) -> int:
    return STATUS[result.kind] if isinstance(result, ServiceError) else 200


# --- queries ------------------------------------------------------------------

# operation name -> (route, ordered argument names)
OPERATIONS: dict[str, tuple[str, tuple[str, ...]]] = {
    "trn_lookup": ("/v1/trn/lookup", ("trn",)),
    "voter_search": ("/v1/voter/search",
                     ("first_prefix", "last_name", "father_prefix", "mother_prefix", "birth_year")),
    "amka_search": ("/v1/amka/search",
                    ("first_name", "last_name", "father_name", "mother_name", "dob", "trn", "id_card")),
    "doc_search": ("/v1/docs/search", ("term",)),
    "doc_fetch": ("/v1/docs/fetch", ("doc_id",)),
}
ROUTES = {route: op for op, (route, _) in OPERATIONS.items()}
_OPTIONAL = {"trn", "id_card"}


def encode_arg(name: str, value: Any) -> Any:
    if name == "dob" and isinstance(value, dt.date):
        return value.isoformat()
    return value


def decode_arg(name: str, value: Any) -> Any:
    if name == "dob" and isinstance(value, str):
        try:
            return dt.date.fromisoformat(value)
        except ValueError:
            raise CodecError(f"dob {value!r} is not an ISO date") from None
    return value


def query_to_json(op: str, args: dict[str, Any]) -> dict[str, Any]:
    _, names = OPERATIONS[op]
    return {n: encode_arg(n, args[n]) for n in names if n in args and args[n] is not None}


def query_from_json(op: str, body: dict[str, Any]) -> dict[str, Any]:
    _, names = OPERATIONS[op]
    unknown = set(body) - set(names)
    if unknown:
        raise CodecError(f"unknown fields for {op}: {sorted(unknown)}")
    missing = [n for n in names if n not in body and n not in _OPTIONAL]
    if missing:
        raise CodecError(f"missing fields for {op}: {missing}")
    for n in names:
        v = body.get(n)
        if n == "birth_year":
            continue  # the service itself rejects non-integers as invalid-format
        if v is not None and n != "dob" and not isinstance(v, str):
            raise CodecError(f"field {n} must be a string")
    return {n: decode_arg(n, body[n]) for n in names if n in body}
