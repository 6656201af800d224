#include "progfc/retrieval.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace progfc::retrieval {

namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'I', 'N', 'D', 'E', 'X'};
constexpr uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  uint32_t len = read_pod<uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  return s;
}

struct HeaderFields {
  Bm25Params params;
  uint64_t doc_count = 0;
  double avg_doc_length = 0.0;
  uint64_t doc_table_offset = 0;
  uint64_t postings_offset = 0;
  uint64_t text_blob_offset = 72;  // header size; blob always follows the header
};

void put_header(std::ostream& os, const HeaderFields& h) {
  os.seekp(0);
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, kFormatVersion);
  write_pod<uint32_t>(os, 0);  // reserved
  write_pod<double>(os, h.params.k1);
  write_pod<double>(os, h.params.b);
  write_pod<uint64_t>(os, h.doc_count);
  write_pod<double>(os, h.avg_doc_length);
  write_pod<uint64_t>(os, h.doc_table_offset);
  write_pod<uint64_t>(os, h.postings_offset);
  write_pod<uint64_t>(os, h.text_blob_offset);
}

HeaderFields get_header(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a progfc index file (bad magic)");
  }
  uint32_t version = read_pod<uint32_t>(is);
  if (version != kFormatVersion) {
    throw std::runtime_error("unsupported index format version " + std::to_string(version));
  }
  read_pod<uint32_t>(is);  // reserved
  HeaderFields h;
  h.params.k1 = read_pod<double>(is);
  h.params.b = read_pod<double>(is);
  h.doc_count = read_pod<uint64_t>(is);
  h.avg_doc_length = read_pod<double>(is);
  h.doc_table_offset = read_pod<uint64_t>(is);
  h.postings_offset = read_pod<uint64_t>(is);
  h.text_blob_offset = read_pod<uint64_t>(is);
  return h;
}

}  // namespace

struct Bm25Index::FileHandle {
  int fd = -1;
  explicit FileHandle(int f) : fd(f) {}
  ~FileHandle() {
    if (fd >= 0) ::close(fd);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (c >= 'A' && c <= 'Z') {
      current.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      current.push_back(static_cast<char>(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

// Accumulates postings and document metadata; text storage is handled by the
// caller (in-memory vector or streamed file blob).
struct BuildState {
  std::unordered_map<std::string, std::vector<Bm25Index::Posting>> postings;
  std::vector<Bm25Index::DocMeta> docs;
  std::vector<uint32_t> doc_lengths;
  std::unordered_map<std::string, uint32_t> id_to_ordinal;
  uint64_t total_tokens = 0;
  uint32_t next_ordinal = 0;

  void add(const EvidenceDoc& doc, uint64_t text_offset) {
    if (doc.text.empty()) {
      throw std::runtime_error("document has empty text: " + doc.doc_id);
    }
    if (!id_to_ordinal.emplace(doc.doc_id, next_ordinal).second) {
      throw std::runtime_error("duplicate doc_id: " + doc.doc_id);
    }
    auto tokens = tokenize(doc.text);
    std::map<std::string, uint32_t> freqs;
    for (auto& t : tokens) ++freqs[t];
    for (auto& [term, tf] : freqs) {
      postings[term].push_back({next_ordinal, tf});
    }
    docs.push_back({doc.doc_id, doc.title, text_offset,
                    static_cast<uint32_t>(doc.text.size())});
    doc_lengths.push_back(static_cast<uint32_t>(tokens.size()));
    total_tokens += tokens.size();
    ++next_ordinal;
  }

  double average_length() const {
    return doc_lengths.empty()
               ? 0.0
               : static_cast<double>(total_tokens) / static_cast<double>(doc_lengths.size());
  }
};

}  // namespace

Bm25Index ingest_corpus(DocumentReader& reader, Bm25Params params) {
  BuildState state;
  std::vector<std::string> texts;
  while (auto doc = reader.next()) {
    state.add(*doc, 0);
    texts.push_back(std::move(doc->text));
  }
  Bm25Index index;
  index.params_ = params;
  index.avg_doc_length_ = state.average_length();
  index.postings_ = std::move(state.postings);
  index.docs_ = std::move(state.docs);
  index.doc_lengths_ = std::move(state.doc_lengths);
  index.id_to_ordinal_ = std::move(state.id_to_ordinal);
  index.texts_ = std::move(texts);
  return index;
}

// ---------------------------------------------------------------------------
// Persistence. File layout, little endian:
//   [header][text blob][doc table][postings]

void Bm25Index::write_tables(std::ostream& os, uint64_t& doc_table_offset,
                             uint64_t& postings_offset,
                             const std::vector<uint64_t>& text_offsets) const {
  doc_table_offset = static_cast<uint64_t>(os.tellp());
  for (size_t i = 0; i < docs_.size(); ++i) {
    write_string(os, docs_[i].id);
    write_string(os, docs_[i].title);
    write_pod<uint64_t>(os, text_offsets[i]);
    write_pod<uint32_t>(os, docs_[i].text_len);
    write_pod<uint32_t>(os, doc_lengths_[i]);
  }

  postings_offset = static_cast<uint64_t>(os.tellp());
  std::vector<const std::string*> terms;
  terms.reserve(postings_.size());
  for (const auto& [term, _] : postings_) terms.push_back(&term);
  std::sort(terms.begin(), terms.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });
  write_pod<uint64_t>(os, terms.size());
  for (const std::string* term : terms) {
    const auto& list = postings_.at(*term);
    write_string(os, *term);
    write_pod<uint64_t>(os, list.size());
    for (const Posting& p : list) {
      write_pod<uint32_t>(os, p.ordinal);
      write_pod<uint32_t>(os, p.tf);
    }
  }
}

void Bm25Index::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open index file for writing: " + path.string());

  HeaderFields header;
  header.params = params_;
  header.doc_count = docs_.size();
  header.avg_doc_length = avg_doc_length_;
  put_header(os, header);  // offsets patched below

  std::vector<uint64_t> offsets(docs_.size());
  for (size_t i = 0; i < docs_.size(); ++i) {
    offsets[i] = static_cast<uint64_t>(os.tellp());
    std::string text = fetch_text(static_cast<uint32_t>(i));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
  write_tables(os, header.doc_table_offset, header.postings_offset, offsets);
  put_header(os, header);
  if (!os) throw std::runtime_error("failed writing index file: " + path.string());
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open index file: " + path.string());
  HeaderFields header = get_header(is);

  Bm25Index index;
  index.params_ = header.params;
  index.avg_doc_length_ = header.avg_doc_length;

  is.seekg(static_cast<std::streamoff>(header.doc_table_offset));
  index.docs_.reserve(header.doc_count);
  index.doc_lengths_.reserve(header.doc_count);
  for (uint64_t i = 0; i < header.doc_count; ++i) {
    DocMeta meta;
    meta.id = read_string(is);
    meta.title = read_string(is);
    meta.text_offset = read_pod<uint64_t>(is);
    meta.text_len = read_pod<uint32_t>(is);
    uint32_t token_count = read_pod<uint32_t>(is);
    index.id_to_ordinal_.emplace(meta.id, static_cast<uint32_t>(i));
    index.docs_.push_back(std::move(meta));
    index.doc_lengths_.push_back(token_count);
  }

  is.seekg(static_cast<std::streamoff>(header.postings_offset));
  uint64_t term_count = read_pod<uint64_t>(is);
  index.postings_.reserve(term_count);
  for (uint64_t t = 0; t < term_count; ++t) {
    std::string term = read_string(is);
    uint64_t df = read_pod<uint64_t>(is);
    std::vector<Posting> list(df);
    for (uint64_t j = 0; j < df; ++j) {
      list[j].ordinal = read_pod<uint32_t>(is);
      list[j].tf = read_pod<uint32_t>(is);
    }
    index.postings_.emplace(std::move(term), std::move(list));
  }
  if (!is) throw std::runtime_error("truncated index file: " + path.string());

  int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) throw std::runtime_error("cannot reopen index file: " + path.string());
  index.text_file_ = std::make_shared<FileHandle>(fd);
  return index;
}

Bm25Index ingest_corpus_to_file(DocumentReader& reader,
                                const std::filesystem::path& out_path,
                                Bm25Params params) {
  std::ofstream os(out_path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open index file for writing: " + out_path.string());
  HeaderFields header;
  header.params = params;
  put_header(os, header);

  BuildState state;
  std::vector<uint64_t> offsets;
  while (auto doc = reader.next()) {
    uint64_t offset = static_cast<uint64_t>(os.tellp());
    state.add(*doc, offset);
    offsets.push_back(offset);
    os.write(doc->text.data(), static_cast<std::streamsize>(doc->text.size()));
  }

  Bm25Index built;
  built.params_ = params;
  built.avg_doc_length_ = state.average_length();
  built.postings_ = std::move(state.postings);
  built.docs_ = std::move(state.docs);
  built.doc_lengths_ = std::move(state.doc_lengths);
  built.id_to_ordinal_ = std::move(state.id_to_ordinal);

  header.doc_count = built.doc_count();
  header.avg_doc_length = built.avg_doc_length();
  built.write_tables(os, header.doc_table_offset, header.postings_offset, offsets);
  put_header(os, header);
  os.close();
  if (!os) throw std::runtime_error("failed writing index file: " + out_path.string());

  int fd = ::open(out_path.c_str(), O_RDONLY);
  if (fd < 0) throw std::runtime_error("cannot reopen index file: " + out_path.string());
  built.text_file_ = std::make_shared<Bm25Index::FileHandle>(fd);
  return built;
}

// ---------------------------------------------------------------------------
// Queries

std::string Bm25Index::fetch_text(uint32_t ordinal) const {
  if (!texts_.empty()) return texts_[ordinal];
  const DocMeta& meta = docs_[ordinal];
  std::string text(meta.text_len, '\0');
  ssize_t got = ::pread(text_file_->fd, text.data(), meta.text_len,
                        static_cast<off_t>(meta.text_offset));
  if (got != static_cast<ssize_t>(meta.text_len)) {
    throw std::runtime_error("short read fetching document text: " + meta.id);
  }
  return text;
}

EvidenceDoc Bm25Index::doc(uint32_t ordinal) const {
  const DocMeta& meta = docs_[ordinal];
  return {meta.id, meta.title, fetch_text(ordinal)};
}

std::optional<uint32_t> Bm25Index::ordinal_of(const std::string& doc_id) const {
  auto it = id_to_ordinal_.find(doc_id);
  if (it == id_to_ordinal_.end()) return std::nullopt;
  return it->second;
}

std::optional<EvidenceDoc> Bm25Index::doc_by_id(const std::string& doc_id) const {
  auto ord = ordinal_of(doc_id);
  if (!ord) return std::nullopt;
  return doc(*ord);
}

std::optional<uint64_t> Bm25Index::doc_frequency(const std::string& term) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return std::nullopt;
  return it->second.size();
}

double Bm25Index::score(std::span<const std::string> query_terms, uint32_t ordinal) const {
  const double n = static_cast<double>(doc_count());
  const double len_norm =
      params_.k1 * (1.0 - params_.b + params_.b * doc_lengths_[ordinal] / avg_doc_length_);
  double total = 0.0;
  for (const std::string& term : query_terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const auto& list = it->second;
    auto pos = std::lower_bound(list.begin(), list.end(), ordinal,
                                [](const Posting& p, uint32_t o) { return p.ordinal < o; });
    if (pos == list.end() || pos->ordinal != ordinal) continue;
    const double df = static_cast<double>(list.size());
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    const double tf = static_cast<double>(pos->tf);
    total += idf * tf * (params_.k1 + 1.0) / (tf + len_norm);
  }
  return total;
}

RetrievalResult Bm25Index::retrieve(const std::string& query, int k) const {
  std::vector<std::string> terms = tokenize(query);
  const double n = static_cast<double>(doc_count());

  std::unordered_map<uint32_t, double> accumulator;
  for (const std::string& term : terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const auto& list = it->second;
    const double df = static_cast<double>(list.size());
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (const Posting& p : list) {
      const double len_norm = params_.k1 * (1.0 - params_.b +
                                            params_.b * doc_lengths_[p.ordinal] / avg_doc_length_);
      const double tf = static_cast<double>(p.tf);
      accumulator[p.ordinal] += idf * tf * (params_.k1 + 1.0) / (tf + len_norm);
    }
  }

  std::vector<std::pair<uint32_t, double>> scored(accumulator.begin(), accumulator.end());
  std::sort(scored.begin(), scored.end(), [this](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return docs_[a.first].id < docs_[b.first].id;
  });
  if (k >= 0 && scored.size() > static_cast<size_t>(k)) scored.resize(static_cast<size_t>(k));

  RetrievalResult result;
  result.ranked.reserve(scored.size());
  for (const auto& [ordinal, doc_score] : scored) {
    result.ranked.push_back({docs_[ordinal].id, doc_score});
  }
  return result;
}

double recall_at_k(const RetrievalResult& result,
                   const std::unordered_set<std::string>& gold_ids, int k) {
  if (gold_ids.empty()) throw std::invalid_argument("recall_at_k: empty gold set");
  size_t hits = 0;
  size_t depth = std::min(result.ranked.size(), static_cast<size_t>(std::max(k, 0)));
  for (size_t i = 0; i < depth; ++i) {
    if (gold_ids.count(result.ranked[i].doc_id)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold_ids.size());
}

RetrievalResult combine_results(std::span<const RetrievalResult> results, int k) {
  std::unordered_map<std::string, double> best;
  for (const RetrievalResult& r : results) {
    for (const ScoredDoc& d : r.ranked) {
      auto [it, inserted] = best.emplace(d.doc_id, d.score);
      if (!inserted && d.score > it->second) it->second = d.score;
    }
  }
  RetrievalResult combined;
  combined.ranked.reserve(best.size());
  for (auto& [id, doc_score] : best) combined.ranked.push_back({id, doc_score});
  std::sort(combined.ranked.begin(), combined.ranked.end(),
            [](const ScoredDoc& a, const ScoredDoc& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.doc_id < b.doc_id;
            });
  if (k >= 0 && combined.ranked.size() > static_cast<size_t>(k)) {
    combined.ranked.resize(static_cast<size_t>(k));
  }
  return combined;
}

// ---------------------------------------------------------------------------
// JSONL corpus reader

struct JsonlCorpusReader::Impl {
  std::ifstream stream;
  std::filesystem::path path;
  size_t line_number = 0;
};

JsonlCorpusReader::JsonlCorpusReader(const std::filesystem::path& path)
    : impl_(std::make_unique<Impl>()) {
  impl_->stream.open(path);
  impl_->path = path;
  if (!impl_->stream) {
    throw std::runtime_error("cannot open corpus file: " + path.string());
  }
}

JsonlCorpusReader::~JsonlCorpusReader() = default;

std::optional<EvidenceDoc> JsonlCorpusReader::next() {
  std::string line;
  while (std::getline(impl_->stream, line)) {
    ++impl_->line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw std::runtime_error(impl_->path.string() + ":" +
                               std::to_string(impl_->line_number) + ": malformed JSON line");
    }
    EvidenceDoc doc;
    if (j.contains("id") && j["id"].is_string()) {
      doc.doc_id = j["id"].get<std::string>();
    } else if (j.contains("id") && j["id"].is_number_integer()) {
      doc.doc_id = std::to_string(j["id"].get<int64_t>());
    } else {
      throw std::runtime_error(impl_->path.string() + ":" +
                               std::to_string(impl_->line_number) + ": missing 'id' field");
    }
    doc.title = j.value("title", std::string{});
    if (!j.contains("text") || !j["text"].is_string()) {
      throw std::runtime_error(impl_->path.string() + ":" +
                               std::to_string(impl_->line_number) + ": missing 'text' field");
    }
    doc.text = j["text"].get<std::string>();
    return doc;
  }
  return std::nullopt;
}

}  // namespace progfc::retrieval
