#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

// Paragraph corpus ingestion, Okapi BM25 inverted index and top-k retrieval.
//
// Tokenization: ASCII letters/digits lowercased, any byte >= 0x80 kept as a
// word character, everything else splits. No stemming, no stopword removal.
//
// Scoring: sum over query terms of idf(t) * tf*(k1+1) / (tf + k1*(1-b+b*len/avglen))
// with idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)).

namespace progfc::retrieval {

struct EvidenceDoc {
  std::string doc_id;
  std::string title;
  std::string text;  // one paragraph
};

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
};

/// Ranked results: scores non-increasing, ties broken by doc_id ascending,
/// no duplicate ids.
struct RetrievalResult {
  std::vector<ScoredDoc> ranked;
};

std::vector<std::string> tokenize(std::string_view text);

/// Pull-based corpus source consumed by ingestion.
class DocumentReader {
 public:
  virtual ~DocumentReader() = default;
  virtual std::optional<EvidenceDoc> next() = 0;
};

/// Line-delimited JSON corpus: one {"id", "title", "text"} object per line.
class JsonlCorpusReader : public DocumentReader {
 public:
  explicit JsonlCorpusReader(const std::filesystem::path& path);
  ~JsonlCorpusReader() override;
  std::optional<EvidenceDoc> next() override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class VectorDocumentReader : public DocumentReader {
 public:
  explicit VectorDocumentReader(std::vector<EvidenceDoc> docs)
      : docs_(std::move(docs)) {}
  std::optional<EvidenceDoc> next() override {
    if (pos_ >= docs_.size()) return std::nullopt;
    return docs_[pos_++];
  }

 private:
  std::vector<EvidenceDoc> docs_;
  size_t pos_ = 0;
};

/// Immutable after build; concurrent retrieval and document fetches are safe.
/// Document text lives in memory after ingest_corpus() and stays on disk
/// (fetched on demand) after load()/ingest_corpus_to_file().
class Bm25Index {
 public:
  struct Posting {
    uint32_t ordinal;
    uint32_t tf;
  };
  struct DocMeta {
    std::string id;
    std::string title;
    uint64_t text_offset = 0;  // absolute file offset in disk mode
    uint32_t text_len = 0;
  };

  Bm25Index() = default;
  Bm25Index(Bm25Index&&) noexcept = default;
  Bm25Index& operator=(Bm25Index&&) noexcept = default;

  static Bm25Index load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  double score(std::span<const std::string> query_terms, uint32_t ordinal) const;
  RetrievalResult retrieve(const std::string& query, int k) const;

  EvidenceDoc doc(uint32_t ordinal) const;
  std::optional<uint32_t> ordinal_of(const std::string& doc_id) const;
  std::optional<EvidenceDoc> doc_by_id(const std::string& doc_id) const;

  uint64_t doc_count() const { return doc_lengths_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  const Bm25Params& params() const { return params_; }
  uint32_t doc_length(uint32_t ordinal) const { return doc_lengths_[ordinal]; }
  uint64_t term_count() const { return postings_.size(); }
  std::optional<uint64_t> doc_frequency(const std::string& term) const;

 private:
  friend Bm25Index ingest_corpus(DocumentReader&, Bm25Params);
  friend Bm25Index ingest_corpus_to_file(DocumentReader&,
                                         const std::filesystem::path&, Bm25Params);

  struct FileHandle;

  std::string fetch_text(uint32_t ordinal) const;
  void write_tables(std::ostream& os, uint64_t& doc_table_offset,
                    uint64_t& postings_offset,
                    const std::vector<uint64_t>& text_offsets) const;

  Bm25Params params_;
  std::vector<DocMeta> docs_;
  std::vector<uint32_t> doc_lengths_;
  std::unordered_map<std::string, uint32_t> id_to_ordinal_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avg_doc_length_ = 0.0;
  std::vector<std::string> texts_;          // in-memory mode
  std::shared_ptr<FileHandle> text_file_;   // disk mode
};

/// Build an index with all document text held in memory.
Bm25Index ingest_corpus(DocumentReader& reader, Bm25Params params = {});

/// Build an index streaming document text straight into `out_path` so the
/// corpus never resides in memory; returns the index reopened from that file.
Bm25Index ingest_corpus_to_file(DocumentReader& reader,
                                const std::filesystem::path& out_path,
                                Bm25Params params = {});

/// Top-k by score with the documented tie-break; fewer than k entries when
/// fewer documents match any query term.
inline RetrievalResult retrieve(const Bm25Index& index, const std::string& query, int k) {
  return index.retrieve(query, k);
}

/// |top-k of result ∩ gold| / |gold|. Throws std::invalid_argument on empty gold.
double recall_at_k(const RetrievalResult& result,
                   const std::unordered_set<std::string>& gold_ids, int k);

/// Union of result lists deduplicated by doc id keeping each doc's maximum
/// score, re-sorted and truncated to k.
RetrievalResult combine_results(std::span<const RetrievalResult> results, int k);

}  // namespace progfc::retrieval
