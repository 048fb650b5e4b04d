use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use super::profile::{GenerationProfile, StringProfile};

const WORDS: &[&str] = &[
    "account", "action", "adapter", "address", "alert", "album", "anchor", "audio", "badge",
    "banner", "battery", "binder", "bitmap", "block", "border", "bounds", "bridge", "buffer",
    "button", "cache", "camera", "canvas", "card", "cart", "channel", "chart", "check", "client",
    "cluster", "color", "column", "config", "contact", "content", "context", "cookie", "counter",
    "cursor", "dialog", "device", "display", "document", "draw", "editor", "entry", "event",
    "export", "factory", "feature", "filter", "folder", "footer", "format", "fragment", "frame",
    "gallery", "gesture", "graph", "group", "handler", "header", "helper", "history", "holder",
    "icon", "image", "import", "index", "input", "intent", "item", "layout", "level", "light",
    "limit", "listener", "loader", "locale", "location", "logger", "manager", "map", "marker",
    "media", "menu", "message", "metric", "model", "module", "network", "notice", "number",
    "offset", "option", "order", "output", "owner", "packet", "page", "panel", "parser", "path",
    "payment", "player", "point", "policy", "popup", "preview", "price", "profile", "progress",
    "provider", "query", "queue", "reader", "record", "region", "remote", "render", "report",
    "request", "resource", "result", "route", "sample", "scanner", "schema", "screen", "scroll",
    "search", "section", "sensor", "server", "service", "session", "setting", "shape", "share",
    "signal", "sound", "source", "state", "status", "storage", "stream", "style", "surface",
    "switch", "table", "target", "task", "theme", "thread", "ticket", "timer", "token", "toolbar",
    "track", "update", "upload", "user", "value", "video", "view", "volume", "wallet", "widget",
    "window", "worker", "writer",
];

const VERBS: &[&str] = &[
    "get", "set", "load", "save", "build", "create", "update", "handle", "parse", "render",
    "init", "reset", "apply", "check", "find", "open", "close", "start", "stop", "show", "hide",
    "read", "write", "send", "fetch", "bind", "clear", "compute", "notify", "register",
];

const SENTENCES: &[&str] = &[
    "Unable to load", "Please try again", "Something went wrong", "Loading", "Are you sure?",
    "No connection", "Saved successfully", "Tap to retry", "Permission denied", "Welcome back",
    "Sign in", "Sign out", "Invalid input", "Download complete", "Update available",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NameKind {
    Package,
    Class,
    Method,
    Field,
}

fn capitalize(w: &str) -> String {
    let mut cs = w.chars();
    match cs.next() {
        Some(c) => c.to_ascii_uppercase().to_string() + cs.as_str(),
        None => String::new(),
    }
}

fn word<R: Rng>(rng: &mut R) -> &'static str {
    WORDS.choose(rng).copied().unwrap_or("value")
}

fn natural_name<R: Rng>(rng: &mut R, kind: NameKind) -> String {
    let mut name = match kind {
        NameKind::Package => return word(rng).to_string(),
        NameKind::Class => capitalize(word(rng)),
        NameKind::Method => VERBS.choose(rng).copied().unwrap_or("get").to_string(),
        NameKind::Field if rng.gen_bool(0.3) => "m".to_string(),
        NameKind::Field => word(rng).to_string(),
    };
    for _ in 0..rng.gen_range(1..=2) {
        name.push_str(&capitalize(word(rng)));
    }
    while name.chars().count() < 5 {
        name.push_str(&capitalize(word(rng)));
    }
    name
}

fn short_name<R: Rng>(rng: &mut R, len: usize) -> String {
    (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

/// Index drawn in proportion to `weights`; 0 when no weight is positive.
pub(crate) fn weighted_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    match WeightedIndex::new(weights) {
        Ok(dist) => dist.sample(rng),
        Err(_) => 0,
    }
}

/// One identifier drawn from the profile's length and character-class
/// distributions. Special and digit characters replace existing positions, so
/// the sampled length is kept.
fn draw_name<R: Rng>(rng: &mut R, p: &GenerationProfile, kind: NameKind) -> String {
    let bucket = weighted_index(rng, &p.name_length_distribution.as_array());
    let base = if bucket == 4 {
        natural_name(rng, kind)
    } else {
        short_name(rng, bucket + 1)
    };
    if kind == NameKind::Package {
        return base;
    }
    let mut chars: Vec<char> = base.chars().collect();
    let len = chars.len();
    let special = rng.gen_bool(p.special_char_rate);
    let numeric = rng.gen_bool(p.numeric_rate);
    if numeric {
        chars[len - 1] = char::from(b'0' + rng.gen_range(0..10u8));
    }
    if special {
        let pool: Vec<char> = p.special_chars.chars().collect();
        if let Some(&c) = pool.choose(rng) {
            if len == 1 {
                chars[0] = c;
            } else {
                chars[rng.gen_range(0..len - 1)] = c;
            }
        }
    }
    chars.into_iter().collect()
}

/// Draws a name not yet in `used` and records it.
pub(crate) fn unique_name<R: Rng>(
    rng: &mut R,
    p: &GenerationProfile,
    kind: NameKind,
    used: &mut HashSet<String>,
) -> String {
    for _ in 0..256 {
        let name = draw_name(rng, p, kind);
        if used.insert(name.clone()) {
            return name;
        }
    }
    let mut i = used.len();
    loop {
        let name = format!("z{i}");
        if used.insert(name.clone()) {
            return name;
        }
        i += 1;
    }
}

fn natural_string<R: Rng>(rng: &mut R) -> String {
    match rng.gen_range(0..6) {
        0 => SENTENCES.choose(rng).copied().unwrap_or("Loading").to_string(),
        1 => format!("https://api.{}.com/v1/{}", word(rng), word(rng)),
        2 => format!("pref_{}_{}", word(rng), word(rng)),
        3 => format!("{} {}", capitalize(word(rng)), word(rng)),
        4 => capitalize(word(rng)),
        _ => format!("{}.{}", word(rng), word(rng)),
    }
}

fn encrypted_string<R: Rng>(rng: &mut R) -> String {
    let len = rng.gen_range(8..=40);
    (0..len).map(|_| rng.gen_range(0x21u8..=0x7e) as char).collect()
}

/// A program string that is neither in `used` nor in `reserved`.
pub(crate) fn unique_string<R: Rng>(
    rng: &mut R,
    profile: StringProfile,
    used: &mut HashSet<String>,
    reserved: &HashSet<String>,
) -> String {
    for attempt in 0..256 {
        let mut s = match profile {
            StringProfile::Natural => natural_string(rng),
            StringProfile::EncryptedLike => encrypted_string(rng),
        };
        if attempt >= 32 && profile == StringProfile::Natural {
            s.push_str(&format!(" {}", rng.gen_range(0..100_000)));
        }
        if !reserved.contains(&s) && used.insert(s.clone()) {
            return s;
        }
    }
    let mut i = used.len();
    loop {
        let s = format!("string #{i}");
        if !reserved.contains(&s) && used.insert(s.clone()) {
            return s;
        }
        i += 1;
    }
}
