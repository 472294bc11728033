//! Event-based parser for GROBID TEI documents: section bodies with their
//! headings, bibliography entries, and in-text citation anchors, plus the
//! joins that turn anchors into per-reference citation profiles and map
//! bibliography entries onto catalog records.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;

use crate::config::{PipelineConfig, CANONICAL_SECTIONS};
use crate::model::{PaperId, PaperRecord, SectionLabel};
use crate::{Error, Result};

/// One body section: canonical label, whether the heading mapped onto the
/// closed label set, the raw heading, and the accumulated text.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub label: SectionLabel,
    pub mapped: bool,
    pub heading: String,
    pub body: String,
}

/// One bibliography entry keyed by its `xml:id`.
#[derive(Debug, Clone, PartialEq)]
pub struct BibEntry {
    pub key: String,
    pub title: String,
    pub year: Option<i32>,
    pub authors: Vec<String>,
}

/// One in-text citation anchor: the bibliography key it points to, the index
/// of the enclosing section, and the character offset into that section's
/// accumulated body text.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub key: String,
    pub section: usize,
    pub offset: usize,
}

/// Parsed TEI document. `dropped_anchors` counts citation pointers that were
/// discarded for lacking a target, pointing at no bibliography entry, or
/// sitting outside any section.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPaper {
    pub sections: Vec<Section>,
    pub bib_entries: Vec<BibEntry>,
    pub anchors: Vec<Anchor>,
    pub dropped_anchors: usize,
}

/// Maps a raw heading onto the closed canonical label set by case-insensitive
/// keyword containment, checking labels in canonical priority order. Returns
/// `(Other, false)` when nothing matches.
pub fn canonicalize_heading(heading: &str, config: &PipelineConfig) -> (SectionLabel, bool) {
    let lowered = heading.to_lowercase();
    for label_name in CANONICAL_SECTIONS {
        let Some(keywords) = config.section_keywords.get(label_name) else {
            continue;
        };
        if keywords.iter().any(|kw| !kw.is_empty() && lowered.contains(kw.as_str())) {
            let label = SectionLabel::parse(label_name).expect("canonical label");
            return (label, true);
        }
    }
    (SectionLabel::Other, false)
}

/// Reads a TEI file from disk.
pub fn parse_tei_file(path: &Path, config: &PipelineConfig) -> Result<ParsedPaper> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_tei(&bytes, config)
}

#[derive(Default)]
struct BibBuilder {
    key: String,
    title_article: Option<String>,
    title_monograph: Option<String>,
    title_plain: Option<String>,
    year: Option<i32>,
    year_published: Option<i32>,
    authors: Vec<String>,
    given_parts: Vec<String>,
    family_parts: Vec<String>,
}

impl BibBuilder {
    fn finish(mut self) -> BibEntry {
        let title = self
            .title_article
            .take()
            .or(self.title_monograph.take())
            .or(self.title_plain.take())
            .unwrap_or_default();
        BibEntry {
            key: self.key,
            title,
            year: self.year_published.or(self.year),
            authors: self.authors,
        }
    }
}

/// Where text events should be routed while walking the document.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TextSink {
    Ignore,
    Heading,
    SectionBody,
    BibTitle(u8),
    GivenName,
    FamilyName,
}

/// Parses TEI bytes into sections, bibliography entries, and anchors.
///
/// Sections are the direct `<div>` children of `<body>`; their first
/// `<head>` becomes the heading and everything else becomes body text.
/// Bibliography entries come from `<biblStruct xml:id=...>` elements,
/// anchors from `<ref type="bibr" target="#key">`. Malformed XML reports the
/// byte offset; a document without a `<body>` is a structure error.
pub fn parse_tei(bytes: &[u8], config: &PipelineConfig) -> Result<ParsedPaper> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);

    let mut sections: Vec<Section> = Vec::new();
    let mut raw_anchors: Vec<Anchor> = Vec::new();
    let mut bib_entries: Vec<BibEntry> = Vec::new();
    let mut dropped_anchors = 0usize;

    let mut saw_body = false;
    let mut body_depth = 0usize;
    // Depth of nested divs inside body; 1 means a section-level div.
    let mut div_depth = 0usize;
    let mut heading_buffer = String::new();
    let mut heading_done = false;
    let mut section_chars = 0usize;
    let mut current_body = String::new();
    let mut in_list_bibl = false;
    let mut bib: Option<BibBuilder> = None;
    let mut sink = TextSink::Ignore;
    let mut sink_stack: Vec<TextSink> = Vec::new();

    let mut buf = Vec::new();
    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| Error::Xml {
            offset: reader.error_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(ref e) => {
                let name = e.local_name();
                let name = name.as_ref();
                sink_stack.push(sink);
                match name {
                    b"body" => {
                        saw_body = true;
                        body_depth += 1;
                    }
                    b"div" if body_depth > 0 => {
                        div_depth += 1;
                        if div_depth == 1 {
                            heading_buffer.clear();
                            heading_done = false;
                            current_body.clear();
                            section_chars = 0;
                            sections.push(Section {
                                label: SectionLabel::Other,
                                mapped: false,
                                heading: String::new(),
                                body: String::new(),
                            });
                            sink = TextSink::SectionBody;
                        }
                    }
                    b"head" if div_depth == 1 && !heading_done => {
                        sink = TextSink::Heading;
                    }
                    b"ref" if body_depth > 0 => {
                        if div_depth == 0 {
                            note_homeless_bibr(e, &reader, &mut dropped_anchors)?;
                        } else {
                            handle_ref(e, &reader, &sections, section_chars, &mut raw_anchors, &mut dropped_anchors)?;
                        }
                    }
                    b"listBibl" => in_list_bibl = true,
                    b"biblStruct" if in_list_bibl => {
                        let mut builder = BibBuilder::default();
                        for attr in e.attributes() {
                            let attr = attr.map_err(|err| Error::Xml {
                                offset: reader.buffer_position(),
                                message: err.to_string(),
                            })?;
                            if attr.key.as_ref() == b"xml:id" {
                                builder.key = attr_text(&attr)?;
                            }
                        }
                        bib = Some(builder);
                        sink = TextSink::Ignore;
                    }
                    b"title" if bib.is_some() => {
                        let mut level = 0u8;
                        for attr in e.attributes().flatten() {
                            if attr.key.as_ref() == b"level" {
                                level = match attr.value.as_ref() {
                                    b"a" => 1,
                                    b"m" => 2,
                                    _ => 255,
                                };
                            }
                        }
                        // Unleveled titles rank below article and monograph
                        // titles; journal and series titles are ignored.
                        sink = if level == 255 { TextSink::Ignore } else { TextSink::BibTitle(level) };
                    }
                    b"date" if bib.is_some() => {
                        let mut when = None;
                        let mut published = false;
                        for attr in e.attributes().flatten() {
                            match attr.key.as_ref() {
                                b"when" => when = Some(attr_text(&attr)?),
                                b"type" => published = attr.value.as_ref() == b"published",
                                _ => {}
                            }
                        }
                        if let (Some(builder), Some(when)) = (bib.as_mut(), when) {
                            let year = parse_year(&when);
                            if published {
                                builder.year_published = builder.year_published.or(year);
                            } else {
                                builder.year = builder.year.or(year);
                            }
                        }
                    }
                    b"persName" if bib.is_some() => {
                        if let Some(builder) = bib.as_mut() {
                            builder.given_parts.clear();
                            builder.family_parts.clear();
                        }
                    }
                    b"forename" if bib.is_some() => sink = TextSink::GivenName,
                    b"surname" if bib.is_some() => sink = TextSink::FamilyName,
                    _ => {}
                }
            }
            Event::Empty(ref e) => {
                let name = e.local_name();
                match name.as_ref() {
                    b"ref" if body_depth > 0 => {
                        if div_depth == 0 {
                            note_homeless_bibr(e, &reader, &mut dropped_anchors)?;
                        } else {
                            handle_ref(e, &reader, &sections, section_chars, &mut raw_anchors, &mut dropped_anchors)?;
                        }
                    }
                    b"date" if bib.is_some() => {
                        let mut when = None;
                        let mut published = false;
                        for attr in e.attributes().flatten() {
                            match attr.key.as_ref() {
                                b"when" => when = Some(attr_text(&attr)?),
                                b"type" => published = attr.value.as_ref() == b"published",
                                _ => {}
                            }
                        }
                        if let (Some(builder), Some(when)) = (bib.as_mut(), when) {
                            let year = parse_year(&when);
                            if published {
                                builder.year_published = builder.year_published.or(year);
                            } else {
                                builder.year = builder.year.or(year);
                            }
                        }
                    }
                    _ => {}
                }
            }
            Event::End(ref e) => {
                let name = e.local_name();
                match name.as_ref() {
                    b"body" => body_depth = body_depth.saturating_sub(1),
                    b"div" if body_depth > 0 && div_depth > 0 => {
                        if div_depth == 1 {
                            if let Some(section) = sections.last_mut() {
                                let (label, mapped) = canonicalize_heading(&heading_buffer, config);
                                section.label = label;
                                section.mapped = mapped;
                                section.heading = heading_buffer.trim().to_string();
                                section.body = current_body.trim().to_string();
                            }
                        }
                        div_depth -= 1;
                    }
                    b"head" if sink == TextSink::Heading => heading_done = true,
                    b"listBibl" => in_list_bibl = false,
                    b"biblStruct" => {
                        if let Some(builder) = bib.take() {
                            if !builder.key.is_empty() {
                                bib_entries.push(builder.finish());
                            }
                        }
                    }
                    b"persName" => {
                        if let Some(builder) = bib.as_mut() {
                            let mut parts = builder.given_parts.clone();
                            parts.extend(builder.family_parts.iter().cloned());
                            let name = parts.join(" ").trim().to_string();
                            if !name.is_empty() {
                                builder.authors.push(name);
                            }
                            builder.given_parts.clear();
                            builder.family_parts.clear();
                        }
                    }
                    _ => {}
                }
                sink = sink_stack.pop().unwrap_or(TextSink::Ignore);
            }
            Event::Text(ref t) => {
                let text = t.xml_content().map_err(|e| Error::Xml {
                    offset: reader.buffer_position(),
                    message: e.to_string(),
                })?;
                let text = text.trim();
                if text.is_empty() {
                    continue;
                }
                match sink {
                    TextSink::Heading => {
                        if !heading_buffer.is_empty() {
                            heading_buffer.push(' ');
                        }
                        heading_buffer.push_str(text);
                    }
                    TextSink::SectionBody => {
                        if !current_body.is_empty() {
                            current_body.push(' ');
                            section_chars += 1;
                        }
                        current_body.push_str(text);
                        section_chars += text.chars().count();
                    }
                    TextSink::BibTitle(level) => {
                        if let Some(builder) = bib.as_mut() {
                            let slot = match level {
                                1 => &mut builder.title_article,
                                2 => &mut builder.title_monograph,
                                _ => &mut builder.title_plain,
                            };
                            if slot.is_none() {
                                *slot = Some(text.to_string());
                            }
                        }
                    }
                    TextSink::GivenName => {
                        if let Some(builder) = bib.as_mut() {
                            builder.given_parts.push(text.to_string());
                        }
                    }
                    TextSink::FamilyName => {
                        if let Some(builder) = bib.as_mut() {
                            builder.family_parts.push(text.to_string());
                        }
                    }
                    TextSink::Ignore => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    if !saw_body {
        return Err(Error::Structure("no <body> element found".into()));
    }

    // Resolve anchors against the bibliography, dropping dangling pointers.
    let keys: BTreeSet<&str> = bib_entries.iter().map(|b| b.key.as_str()).collect();
    let mut anchors = Vec::with_capacity(raw_anchors.len());
    for anchor in raw_anchors {
        if keys.contains(anchor.key.as_str()) {
            anchors.push(anchor);
        } else {
            dropped_anchors += 1;
        }
    }

    Ok(ParsedPaper { sections, bib_entries, anchors, dropped_anchors })
}

/// A citation pointer outside any section cannot be attributed; count it.
fn note_homeless_bibr(
    e: &quick_xml::events::BytesStart<'_>,
    reader: &Reader<&[u8]>,
    dropped_anchors: &mut usize,
) -> Result<()> {
    for attr in e.attributes() {
        let attr = attr.map_err(|err| Error::Xml {
            offset: reader.buffer_position(),
            message: err.to_string(),
        })?;
        if attr.key.as_ref() == b"type" && attr.value.as_ref() == b"bibr" {
            *dropped_anchors += 1;
            return Ok(());
        }
    }
    Ok(())
}

fn handle_ref(
    e: &quick_xml::events::BytesStart<'_>,
    reader: &Reader<&[u8]>,
    sections: &[Section],
    section_chars: usize,
    raw_anchors: &mut Vec<Anchor>,
    dropped_anchors: &mut usize,
) -> Result<()> {
    let mut is_bibr = false;
    let mut target: Option<String> = None;
    for attr in e.attributes() {
        let attr = attr.map_err(|err| Error::Xml {
            offset: reader.buffer_position(),
            message: err.to_string(),
        })?;
        match attr.key.as_ref() {
            b"type" => is_bibr = attr.value.as_ref() == b"bibr",
            b"target" => target = Some(attr_text(&attr)?),
            _ => {}
        }
    }
    if !is_bibr {
        return Ok(());
    }
    let Some(target) = target else {
        *dropped_anchors += 1;
        return Ok(());
    };
    let key = target.strip_prefix('#').unwrap_or(&target).to_string();
    if sections.is_empty() {
        // A citation before the first section has no home.
        *dropped_anchors += 1;
        return Ok(());
    }
    raw_anchors.push(Anchor { key, section: sections.len() - 1, offset: section_chars });
    Ok(())
}

fn attr_text(attr: &quick_xml::events::attributes::Attribute<'_>) -> Result<String> {
    attr.unescape_value()
        .map(|v| v.into_owned())
        .map_err(|e| Error::Xml { offset: 0, message: e.to_string() })
}

fn parse_year(when: &str) -> Option<i32> {
    let digits: String = when.chars().take(4).collect();
    if digits.len() == 4 && digits.chars().all(|c| c.is_ascii_digit()) {
        digits.parse().ok()
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Citation profiles

/// Aggregated full-text citation evidence for one bibliography entry.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProfileEntry {
    /// Number of in-text anchors pointing at the entry.
    pub cite_count: u32,
    /// Canonical labels of the sections containing those anchors.
    pub sections: BTreeSet<SectionLabel>,
    /// True when any anchor sits in a section whose heading failed canonical
    /// mapping, or when identity matching was fuzzy.
    pub low_confidence: bool,
}

/// Citation profiles keyed by bibliography key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CitationProfile {
    pub entries: BTreeMap<String, ProfileEntry>,
}

/// Counts anchors per bibliography entry and records which sections cite it.
pub fn build_citation_profile(paper: &ParsedPaper) -> CitationProfile {
    let mut entries: BTreeMap<String, ProfileEntry> = BTreeMap::new();
    for anchor in &paper.anchors {
        let section = &paper.sections[anchor.section];
        let entry = entries.entry(anchor.key.clone()).or_insert_with(|| ProfileEntry {
            cite_count: 0,
            sections: BTreeSet::new(),
            low_confidence: false,
        });
        entry.cite_count += 1;
        entry.sections.insert(section.label);
        if !section.mapped {
            entry.low_confidence = true;
        }
    }
    CitationProfile { entries }
}

// ---------------------------------------------------------------------------
// Bibliography matching

/// A resolved bibliography entry and whether the match needed fuzzing.
#[derive(Debug, Clone, PartialEq)]
pub struct BibMatch {
    pub id: PaperId,
    pub fuzzy: bool,
}

/// Outcome of matching bibliography entries against catalog records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BibMatchResult {
    pub matched: BTreeMap<String, BibMatch>,
    pub unmatched: Vec<String>,
}

/// Lowercases, strips punctuation, and collapses whitespace.
pub fn normalize_title(title: &str) -> String {
    let lowered = title.to_lowercase();
    let stripped: String =
        lowered.chars().map(|c| if c.is_alphanumeric() { c } else { ' ' }).collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Matches bibliography entries to records: exact normalized-title equality
/// first, then fuzzy matching at the configured similarity threshold with a
/// year constraint. Ambiguous matches resolve to the smallest id;
/// leftover entries are reported, not guessed.
pub fn match_bib_to_records(
    paper: &ParsedPaper,
    records: &[PaperRecord],
    config: &PipelineConfig,
) -> BibMatchResult {
    let mut by_norm_title: BTreeMap<String, BTreeSet<&PaperId>> = BTreeMap::new();
    for record in records {
        by_norm_title.entry(normalize_title(&record.title)).or_default().insert(&record.id);
    }

    let mut result = BibMatchResult::default();
    for entry in &paper.bib_entries {
        let norm = normalize_title(&entry.title);
        if norm.is_empty() {
            result.unmatched.push(entry.key.clone());
            continue;
        }
        if let Some(ids) = by_norm_title.get(&norm) {
            let id = (*ids.iter().next().expect("non-empty id set")).clone();
            result.matched.insert(entry.key.clone(), BibMatch { id, fuzzy: false });
            continue;
        }

        let mut best: Option<(f64, &PaperId)> = None;
        for record in records {
            let (Some(entry_year), Some(record_year)) = (entry.year, record.year) else {
                continue;
            };
            if (entry_year - record_year).abs() > config.bib_match.year_slack {
                continue;
            }
            let similarity = strsim::normalized_levenshtein(&norm, &normalize_title(&record.title));
            if similarity < config.bib_match.fuzzy_similarity {
                continue;
            }
            best = match best {
                None => Some((similarity, &record.id)),
                Some((best_sim, best_id)) => {
                    if similarity > best_sim || (similarity == best_sim && record.id < *best_id) {
                        Some((similarity, &record.id))
                    } else {
                        Some((best_sim, best_id))
                    }
                }
            };
        }
        match best {
            Some((_, id)) => {
                result.matched.insert(entry.key.clone(), BibMatch { id: id.clone(), fuzzy: true });
            }
            None => result.unmatched.push(entry.key.clone()),
        }
    }
    result
}

/// Rekeys a citation profile by paper id using the bibliography matches.
/// Fuzzy matches force the low-confidence flag; entries matched onto the
/// same record merge.
pub fn profile_by_paper_id(
    profile: &CitationProfile,
    matches: &BibMatchResult,
) -> BTreeMap<PaperId, ProfileEntry> {
    let mut by_id: BTreeMap<PaperId, ProfileEntry> = BTreeMap::new();
    for (key, entry) in &profile.entries {
        let Some(bib_match) = matches.matched.get(key) else {
            continue;
        };
        let merged = by_id.entry(bib_match.id.clone()).or_insert_with(|| ProfileEntry {
            cite_count: 0,
            sections: BTreeSet::new(),
            low_confidence: false,
        });
        merged.cite_count += entry.cite_count;
        merged.sections.extend(entry.sections.iter().copied());
        merged.low_confidence |= entry.low_confidence || bib_match.fuzzy;
    }
    by_id
}

/// Concatenates the introduction and method section bodies; this is the text
/// the idea extractor sees for a seed paper.
pub fn seed_context_text(paper: &ParsedPaper) -> String {
    paper
        .sections
        .iter()
        .filter(|s| matches!(s.label, SectionLabel::Introduction | SectionLabel::Method))
        .map(|s| s.body.as_str())
        .filter(|body| !body.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}
