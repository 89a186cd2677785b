//! Binary snapshot format.
//!
//! ```text
//! magic "ARCHIDX\0" | version u32 | section* | checksum u64
//! section = tag [u8; 4] | length u64 | payload
//! ```
//!
//! All integers little-endian, strings are `u32` length + UTF-8, vectors are
//! raw `f32`. Sections: `META` (BM25 params, provider), `MANI` (manifest),
//! `UNIT` (unit table and display content), `POST` (postings), and one `VECT`
//! per modality store. The checksum is FNV-1a 64 over every preceding byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Bm25Params, IndexError, IndexSnapshot, IndexUnit, InvertedIndex, Posting, UnitContent, VectorStore, VectorStores};
use crate::embed::{fnv1a64, ModelNames, ProviderConfig};
use crate::model::{CorpusManifest, DocumentEntry, ImageKind, Modality};
use crate::ranking::UnitId;

pub const MAGIC: &[u8; 8] = b"ARCHIDX\0";
pub const FORMAT_VERSION: u32 = 1;

const META: &[u8; 4] = b"META";
const MANI: &[u8; 4] = b"MANI";
const UNIT: &[u8; 4] = b"UNIT";
const POST: &[u8; 4] = b"POST";
const VECT: &[u8; 4] = b"VECT";

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(n as u32);
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn opt_str(&mut self, s: Option<&str>) {
        match s {
            Some(s) => {
                self.u8(1);
                self.str(s);
            }
            None => self.u8(0),
        }
    }
    fn strs(&mut self, v: &[String]) {
        self.len(v.len());
        v.iter().for_each(|s| self.str(s));
    }
    fn section(&mut self, tag: &[u8; 4], body: Writer) {
        self.buf.extend_from_slice(tag);
        self.u64(body.buf.len() as u64);
        self.buf.extend_from_slice(&body.buf);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }

    fn corrupt(&self, msg: impl std::fmt::Display) -> IndexError {
        IndexError::Corrupt(format!("{} at byte {}: {msg}", self.what, self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.corrupt("unexpected end of data")),
        }
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], IndexError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f32(&mut self) -> Result<f32, IndexError> {
        Ok(f32::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, IndexError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    /// A count, sanity-checked against the bytes left (each item takes at least `min_item` bytes).
    fn len(&mut self, min_item: usize) -> Result<usize, IndexError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.buf.len() - self.pos {
            return Err(self.corrupt(format!("count {n} exceeds remaining data")));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, IndexError> {
        let n = self.len(1)?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.corrupt("invalid UTF-8"))
    }
    fn opt_str(&mut self) -> Result<Option<String>, IndexError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.str()?)),
            t => Err(self.corrupt(format!("bad option tag {t}"))),
        }
    }
    fn strs(&mut self) -> Result<Vec<String>, IndexError> {
        let n = self.len(4)?;
        (0..n).map(|_| self.str()).collect()
    }
    fn modality(&mut self) -> Result<Modality, IndexError> {
        let t = self.u8()?;
        Modality::from_index(t as usize).ok_or_else(|| self.corrupt(format!("bad modality tag {t}")))
    }
    fn finish(&self) -> Result<(), IndexError> {
        if self.pos != self.buf.len() {
            return Err(self.corrupt("trailing bytes in section"));
        }
        Ok(())
    }
}

fn image_kind_tag(k: ImageKind) -> u8 {
    match k {
        ImageKind::Map => 0,
        ImageKind::Photograph => 1,
        ImageKind::SiteLayout => 2,
        ImageKind::Figure => 3,
    }
}

fn image_kind_from_tag(r: &Reader<'_>, t: u8) -> Result<ImageKind, IndexError> {
    Ok(match t {
        0 => ImageKind::Map,
        1 => ImageKind::Photograph,
        2 => ImageKind::SiteLayout,
        3 => ImageKind::Figure,
        _ => return Err(r.corrupt(format!("bad image kind tag {t}"))),
    })
}

/// Serializes a snapshot into the versioned binary format.
pub fn write_snapshot(snap: &IndexSnapshot) -> Vec<u8> {
    let mut out = Writer::default();
    out.buf.extend_from_slice(MAGIC);
    out.u32(FORMAT_VERSION);

    let mut meta = Writer::default();
    meta.f64(snap.bm25.k1);
    meta.f64(snap.bm25.b);
    match &snap.provider {
        ProviderConfig::DeterministicHash { dim } => {
            meta.u8(0);
            meta.u64(*dim as u64);
        }
        ProviderConfig::ExternalService { endpoint, models } => {
            meta.u8(1);
            meta.str(endpoint);
            meta.str(&models.text);
            meta.str(&models.image);
            meta.str(&models.table);
        }
    }
    out.section(META, meta);

    let mut mani = Writer::default();
    mani.len(snap.manifest.documents.len());
    for d in &snap.manifest.documents {
        mani.str(&d.doc_id);
        mani.str(&d.title);
        mani.str(&d.source_path);
        mani.u64(d.num_pages as u64);
        mani.u64(d.num_images as u64);
        mani.u64(d.num_tables as u64);
    }
    out.section(MANI, mani);

    let mut units = Writer::default();
    units.len(snap.index.units().len());
    for (u, content) in snap.index.units().iter().zip(&snap.contents) {
        units.u32(u.unit_id.0);
        units.u8(u.modality.index() as u8);
        units.str(&u.doc_id);
        units.u32(u.page_no);
        units.opt_str(u.block_id.as_deref());
        units.u32(u.token_count);
        match content {
            UnitContent::Text { text } => {
                units.u8(0);
                units.str(text);
            }
            UnitContent::Image { image_kind, caption, context } => {
                units.u8(1);
                units.u8(image_kind_tag(*image_kind));
                units.opt_str(caption.as_deref());
                units.str(context);
            }
            UnitContent::Table { header, rows, caption, context } => {
                units.u8(2);
                units.strs(header);
                units.len(rows.len());
                rows.iter().for_each(|r| units.strs(r));
                units.opt_str(caption.as_deref());
                units.str(context);
            }
        }
    }
    out.section(UNIT, units);

    let mut post = Writer::default();
    let terms: Vec<_> = snap.index.postings().collect();
    post.len(terms.len());
    for (term, list) in terms {
        post.str(term);
        post.len(list.entries().len());
        for p in list.entries() {
            post.u32(p.unit_id.0);
            post.u32(p.tf);
        }
    }
    out.section(POST, post);

    for store in snap.stores.iter() {
        let mut v = Writer::default();
        v.u8(store.modality().index() as u8);
        v.u32(store.dim() as u32);
        v.len(store.len());
        store.ids().iter().for_each(|id| v.u32(id.0));
        for x in store.raw_data() {
            v.buf.extend_from_slice(&x.to_le_bytes());
        }
        out.section(VECT, v);
    }

    let checksum = fnv1a64(out.buf.iter().copied());
    out.u64(checksum);
    out.buf
}

/// Parses bytes produced by [`write_snapshot`].
pub fn read_snapshot(bytes: &[u8]) -> Result<IndexSnapshot, IndexError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(IndexError::BadMagic);
    }
    let mut r = Reader::new(bytes, "header");
    r.take(MAGIC.len())?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(IndexError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < r.pos + 8 {
        return Err(IndexError::Corrupt("file truncated before checksum".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if fnv1a64(body.iter().copied()) != stored {
        return Err(IndexError::Corrupt("checksum mismatch (file truncated or modified)".into()));
    }

    let mut meta = None;
    let mut manifest = None;
    let mut units = None;
    let mut postings = None;
    let mut stores = VectorStores::new();

    let mut r = Reader::new(body, "section table");
    r.pos = MAGIC.len() + 4;
    while r.pos < body.len() {
        let tag: [u8; 4] = r.array()?;
        let len = r.u64()?;
        let payload = r.take(usize::try_from(len).map_err(|_| r.corrupt("section too large"))?)?;
        match &tag {
            META => meta = Some(read_meta(payload)?),
            MANI => manifest = Some(read_manifest(payload)?),
            UNIT => units = Some(read_units(payload)?),
            POST => postings = Some(read_postings(payload)?),
            VECT => {
                let store = read_vectors(payload)?;
                if stores.get(store.modality()).is_some() {
                    return Err(IndexError::Corrupt(format!("duplicate {} vector section", store.modality())));
                }
                stores.insert_store(store);
            }
            // Unknown sections are skipped.
            _ => {}
        }
    }

    let missing = |name: &str| IndexError::Corrupt(format!("missing {name} section"));
    let (bm25, provider) = meta.ok_or_else(|| missing("META"))?;
    let (units, contents) = units.ok_or_else(|| missing("UNIT"))?;
    let index = InvertedIndex::from_parts(units, postings.ok_or_else(|| missing("POST"))?)?;
    for store in stores.iter() {
        for id in store.ids() {
            match index.unit(*id) {
                Some(u) if u.modality == store.modality() => {}
                _ => return Err(IndexError::Corrupt(format!("{} store references unit {id}", store.modality()))),
            }
        }
    }
    Ok(IndexSnapshot {
        index,
        stores,
        manifest: manifest.ok_or_else(|| missing("MANI"))?,
        contents,
        bm25,
        provider,
    })
}

fn read_meta(payload: &[u8]) -> Result<(Bm25Params, ProviderConfig), IndexError> {
    let mut r = Reader::new(payload, "META");
    let bm25 = Bm25Params::new(r.f64()?, r.f64()?)?;
    let provider = match r.u8()? {
        0 => ProviderConfig::DeterministicHash { dim: r.u64()? as usize },
        1 => ProviderConfig::ExternalService {
            endpoint: r.str()?,
            models: ModelNames {
                text: r.str()?,
                image: r.str()?,
                table: r.str()?,
            },
        },
        t => return Err(r.corrupt(format!("bad provider tag {t}"))),
    };
    r.finish()?;
    Ok((bm25, provider))
}

fn read_manifest(payload: &[u8]) -> Result<CorpusManifest, IndexError> {
    let mut r = Reader::new(payload, "MANI");
    let n = r.len(36)?;
    let mut m = CorpusManifest::default();
    for _ in 0..n {
        let d = DocumentEntry {
            doc_id: r.str()?,
            title: r.str()?,
            source_path: r.str()?,
            num_pages: r.u64()? as usize,
            num_images: r.u64()? as usize,
            num_tables: r.u64()? as usize,
        };
        m.num_documents += 1;
        m.num_pages += d.num_pages;
        m.num_images += d.num_images;
        m.num_tables += d.num_tables;
        m.documents.push(d);
    }
    r.finish()?;
    Ok(m)
}

fn read_units(payload: &[u8]) -> Result<(Vec<IndexUnit>, Vec<UnitContent>), IndexError> {
    let mut r = Reader::new(payload, "UNIT");
    let n = r.len(20)?;
    let mut units = Vec::with_capacity(n);
    let mut contents = Vec::with_capacity(n);
    for _ in 0..n {
        let unit = IndexUnit {
            unit_id: UnitId(r.u32()?),
            modality: r.modality()?,
            doc_id: r.str()?,
            page_no: r.u32()?,
            block_id: r.opt_str()?,
            token_count: r.u32()?,
        };
        let content = match (r.u8()?, unit.modality) {
            (0, Modality::Text) => UnitContent::Text { text: r.str()? },
            (1, Modality::Image) => {
                let tag = r.u8()?;
                UnitContent::Image {
                    image_kind: image_kind_from_tag(&r, tag)?,
                    caption: r.opt_str()?,
                    context: r.str()?,
                }
            }
            (2, Modality::Table) => {
                let header = r.strs()?;
                let nrows = r.len(4)?;
                let rows = (0..nrows).map(|_| r.strs()).collect::<Result<_, _>>()?;
                UnitContent::Table {
                    header,
                    rows,
                    caption: r.opt_str()?,
                    context: r.str()?,
                }
            }
            (t, m) => return Err(r.corrupt(format!("content tag {t} does not match {m} unit"))),
        };
        units.push(unit);
        contents.push(content);
    }
    r.finish()?;
    Ok((units, contents))
}

fn read_postings(payload: &[u8]) -> Result<Vec<(String, Vec<Posting>)>, IndexError> {
    let mut r = Reader::new(payload, "POST");
    let n = r.len(8)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let term = r.str()?;
        let m = r.len(8)?;
        let entries = (0..m)
            .map(|_| {
                Ok(Posting {
                    unit_id: UnitId(r.u32()?),
                    tf: r.u32()?,
                })
            })
            .collect::<Result<Vec<_>, IndexError>>()?;
        out.push((term, entries));
    }
    r.finish()?;
    Ok(out)
}

fn read_vectors(payload: &[u8]) -> Result<VectorStore, IndexError> {
    let mut r = Reader::new(payload, "VECT");
    let modality = r.modality()?;
    let dim = r.u32()? as usize;
    let n = r.len(4)?;
    let ids = (0..n).map(|_| r.u32().map(UnitId)).collect::<Result<Vec<_>, _>>()?;
    let count = n
        .checked_mul(dim)
        .filter(|c| c.saturating_mul(4) <= payload.len())
        .ok_or_else(|| r.corrupt("vector block larger than section"))?;
    let data = (0..count).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    VectorStore::from_parts(modality, dim, ids, data)
}

/// Writes atomically: a temporary sibling file is renamed over `path`.
pub fn persist(snap: &IndexSnapshot, path: &Path) -> Result<(), IndexError> {
    let bytes = write_snapshot(snap);
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<IndexSnapshot, IndexError> {
    read_snapshot(&fs::read(path)?)
}
