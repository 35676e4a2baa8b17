//! Peak heap use while streaming depends on the largest page, not the dump.

use std::alloc::{GlobalAlloc, Layout, System};
use std::io::Read;
use std::sync::atomic::{AtomicUsize, Ordering};

use afdforge::dump::{stream_afd_pages, AFD_PREFIX};

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

/// Generates a dump lazily: one huge page followed by many small ones. The
/// huge page text is emitted in chunks so the generator itself stays small.
struct SyntheticDump {
    buf: Vec<u8>,
    pos: usize,
    next_page: usize,
    pages: usize,
    huge_text: usize,
    pending_words: usize,
}

impl SyntheticDump {
    fn new(pages: usize, huge_text: usize) -> Self {
        SyntheticDump { buf: b"<mediawiki>".to_vec(), pos: 0, next_page: 0, pages, huge_text, pending_words: 0 }
    }

    fn refill(&mut self) {
        self.buf.clear();
        self.pos = 0;
        if self.pending_words > 0 {
            let n = self.pending_words.min(4096);
            self.buf.extend_from_slice("word ".repeat(n).as_bytes());
            self.pending_words -= n;
            if self.pending_words == 0 {
                self.buf.extend_from_slice(b"</text></revision></page>");
            }
            return;
        }
        if self.next_page > self.pages {
            return;
        }
        if self.next_page == self.pages {
            self.buf.extend_from_slice(b"</mediawiki>");
            self.next_page += 1;
            return;
        }
        let i = self.next_page;
        let title = if i.is_multiple_of(2) { format!("{AFD_PREFIX}Page {i}") } else { format!("Talk:Page {i}") };
        self.buf.extend_from_slice(
            format!(
                "<page><title>{title}</title><id>{i}</id><revision><id>{i}</id>\
                 <timestamp>2007-05-03T12:00:00Z</timestamp><contributor><username>U</username><id>1</id>\
                 </contributor><text>"
            )
            .as_bytes(),
        );
        if i == 0 {
            self.pending_words = self.huge_text / 5;
        } else {
            self.buf.extend_from_slice("small page text ".repeat(80).as_bytes());
            self.buf.extend_from_slice(b"</text></revision></page>");
        }
        self.next_page += 1;
    }
}

impl Read for SyntheticDump {
    fn read(&mut self, out: &mut [u8]) -> std::io::Result<usize> {
        if self.pos == self.buf.len() {
            self.refill();
            if self.buf.is_empty() {
                return Ok(0);
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

/// Stream a synthetic dump and return (kept pages, kept text bytes, peak heap growth).
fn stream(pages: usize, huge: usize) -> (usize, usize, usize) {
    let source = SyntheticDump::new(pages, huge);
    let baseline = CURRENT.load(Ordering::Relaxed);
    PEAK.store(baseline, Ordering::Relaxed);
    let mut seen = 0;
    let mut total_bytes = 0usize;
    for page in stream_afd_pages(std::io::BufReader::new(source), AFD_PREFIX) {
        let page = page.unwrap();
        total_bytes += page.revisions.iter().map(|r| r.text.len()).sum::<usize>();
        seen += 1;
    }
    (seen, total_bytes, PEAK.load(Ordering::Relaxed) - baseline)
}

#[test]
fn peak_memory_tracks_the_largest_page() {
    let huge = 4 << 20;
    let (_, _, alone) = stream(1, huge);
    let (seen, total_bytes, peak) = stream(40_000, huge);
    assert_eq!(seen, 20_000);
    // the kept pages alone hold several times the largest page
    assert!(total_bytes > 5 * huge, "{total_bytes}");
    assert!(peak < 4 * huge, "peak {peak} bytes for a {huge}-byte page");
    assert!(peak < alone + (1 << 20), "peak {peak} with many pages, {alone} with the large page alone");
}
