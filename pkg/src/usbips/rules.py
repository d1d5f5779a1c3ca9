"""Behavior rule set distributed by the server: target paths, reference
resolver tables, CAPTCHA policy, and the no-execute switch."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError
from .net_guard import ReferenceResolver, ReferenceResolverSet
from .storage_guard import TargetPathSet


@dataclass(frozen=True)
class CaptchaPolicy:
    enabled: bool = True
    symbol_count: int = 8

    def __post_init__(self):
        if self.symbol_count != 8:
            raise ValidationError("challenge length is fixed at 8 symbols")


@dataclass(frozen=True)
class BehaviorRuleSet:
    version: int = 1
    target_paths: TargetPathSet = field(default_factory=TargetPathSet)
    resolvers: ReferenceResolverSet = field(default_factory=ReferenceResolverSet)
    captcha: CaptchaPolicy = field(default_factory=CaptchaPolicy)
    no_execute: bool = True

    def to_json(self) -> dict:
        return {
            "target_paths": list(self.target_paths.paths),
            "reference_resolvers": [
                {
                    "name": r.name,
                    "answers": {
                        name: {"a": list(a_records), "cname": cname}
                        for name, (a_records, cname) in r.answers.items()
                    },
                }
                for r in self.resolvers.resolvers
            ],
            "captcha_policy": {
                "enabled": self.captcha.enabled,
                "symbol_count": self.captcha.symbol_count,
            },
            "no_execute": self.no_execute,
        }


def resolver_from_json(doc: dict) -> ReferenceResolver:
    try:
        answers = {
            name: (tuple(answer["a"]), answer.get("cname", ""))
            for name, answer in doc.get("answers", {}).items()
        }
        return ReferenceResolver(name=doc["name"], answers=answers)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad resolver table: {exc}") from exc


def ruleset_from_json(doc: dict, version: int = 1) -> BehaviorRuleSet:
    if not isinstance(doc, dict):
        raise ValidationError("rule set body must be an object")
    captcha = doc.get("captcha_policy", {})
    return BehaviorRuleSet(
        version=version,
        target_paths=TargetPathSet(tuple(doc.get("target_paths", ()))),
        resolvers=ReferenceResolverSet(
            tuple(resolver_from_json(r) for r in doc.get("reference_resolvers", ()))
        ),
        captcha=CaptchaPolicy(
            enabled=bool(captcha.get("enabled", True)),
            symbol_count=int(captcha.get("symbol_count", 8)),
        ),
        no_execute=bool(doc.get("no_execute", True)),
    )
