"""Mock MediaWiki-like storage sites."""

from .model import (
    DEFAULT_DOMAIN_MIX,
    DESK_COUNTS,
    DOMAIN_CLASSES,
    EXPERIMENT_COUNTS,
    PROTECTIONS,
    REFUSAL_REASONS,
    WRITABLE,
    EditRefused,
    ModerationEvent,
    PageNotFound,
    Revision,
    SiteHost,
    SiteRecord,
    SiteUnreachable,
    TitleExists,
    create_population,
)
from .server import build_router

__all__ = [
    "DEFAULT_DOMAIN_MIX", "DESK_COUNTS", "DOMAIN_CLASSES", "EXPERIMENT_COUNTS", "PROTECTIONS",
    "REFUSAL_REASONS", "WRITABLE", "EditRefused", "ModerationEvent", "PageNotFound", "Revision",
    "SiteHost", "SiteRecord", "SiteUnreachable", "TitleExists", "build_router", "create_population",
]
