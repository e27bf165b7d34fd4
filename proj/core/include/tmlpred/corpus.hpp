// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/task.hpp>
#include <tmlpred/text.hpp>

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

/// Evidence corpus: per-task language -> model family -> metric records, in a
/// combined (answer space) and a reduced (inference-time) view.
namespace tmlpred::corpus
{

struct MetricRecord
{
    std::string metric_name;
    double raw_value = 0.0;
    std::string paper_id;

    auto operator<=>(const MetricRecord&) const = default;
};

using FamilyRecords = std::map<std::string, std::vector<MetricRecord>, FoldLess>;
using LanguageEntries = std::map<std::string, FamilyRecords, FoldLess>;

struct ModelFamilyMapping
{
    Task task = Task::CodeGeneration;
    LanguageEntries entries;

    std::size_t record_count() const;
    std::set<std::string> papers() const;
    bool operator==(const ModelFamilyMapping& other) const;
};

using TaskMappings = std::map<Task, ModelFamilyMapping>;

/// ISO 639-3 codes with display names and alternative spellings.
class LanguageTable
{
  public:
    LanguageTable() = default;

    /// `{ "<code>": ["Display Name", "alias", ...] }`; the first entry is the display name.
    static LanguageTable from_json(const Json& doc);
    static LanguageTable load(const std::string& path);

    /// Canonical lowercase code for a code or alias; unknown names are folded as-is.
    std::string canonical(std::string_view name) const;
    /// Display name for a code; falls back to the code.
    std::string display(std::string_view code) const;

  private:
    AliasTable aliases_;
    std::map<std::string, std::string, std::less<>> display_;
};

/// Builds a mapping from the mapping-file JSON document. Duplicate
/// (language, family, metric, value, paper) records are kept once.
ModelFamilyMapping parse_mapping(const Json& doc, const LanguageTable& languages = {});
ModelFamilyMapping load_mapping(const std::string& path, const LanguageTable& languages = {});
Json to_json(const ModelFamilyMapping& mapping);

class EvidenceCorpus;

/// Returns human-readable problems; empty means every scenario is instantiable.
using InstantiabilityCheck = std::function<std::vector<std::string>(const EvidenceCorpus&)>;

class EvidenceCorpus
{
  public:
    /// Splits `combined` into combined/reduced views by dropping every record
    /// whose paper is in `removed`. `paper_order` lists papers oldest first and
    /// defines recency for ground-truth selection. Throws InputError for an
    /// unknown paper id and InvariantError when `check` reports problems.
    static EvidenceCorpus reduce(TaskMappings combined,
                                 std::set<std::string> removed,
                                 const InstantiabilityCheck& check,
                                 std::vector<std::string> paper_order = {});

    const TaskMappings& combined() const noexcept { return combined_; }
    const TaskMappings& reduced() const noexcept { return reduced_; }
    const std::set<std::string>& removed_papers() const noexcept { return removed_; }

    /// Higher is more recent. Papers missing from the ordering rank below all
    /// listed ones.
    long paper_rank(std::string_view paper_id) const;

    Json to_json() const;

  private:
    TaskMappings combined_;
    TaskMappings reduced_;
    std::set<std::string> removed_;
    std::map<std::string, long, std::less<>> order_;
};

enum class ViewRole
{
    Combined,
    ReducedOnly,
};

/// Read-only access to one side of an EvidenceCorpus.
class CorpusView
{
  public:
    CorpusView(std::shared_ptr<const EvidenceCorpus> corpus, ViewRole role);

    ViewRole role() const noexcept { return role_; }
    const EvidenceCorpus& corpus() const noexcept { return *corpus_; }

    /// Records for the triple; empty when the combination is unobserved.
    std::vector<MetricRecord> lookup(Task task, std::string_view language, std::string_view family) const;

    /// Mapping for the task on this side, or nullptr when the task is absent.
    const ModelFamilyMapping* mapping(Task task) const;

    bool language_observed(Task task, std::string_view language) const;
    bool family_observed(Task task, std::string_view family) const;
    bool pair_observed(Task task, std::string_view language, std::string_view family) const;

    /// Languages with at least one record for `family`.
    std::vector<std::string> languages_for_family(Task task, std::string_view family) const;

  private:
    const TaskMappings& side() const noexcept;

    std::shared_ptr<const EvidenceCorpus> corpus_;
    ViewRole role_;
};

/// Corpus manifest file: `{ "mappings": [paths], "removed_papers": [ids],
/// "paper_order": [ids], "languages": path }`. Relative paths resolve against
/// the manifest's directory.
struct CorpusManifest
{
    std::vector<std::string> mapping_paths;
    std::set<std::string> removed_papers;
    std::vector<std::string> paper_order;
    std::string languages_path;

    static CorpusManifest load(const std::string& path);
};

/// Loads every mapping named in the manifest; two files for the same task are an error.
TaskMappings load_mappings(const CorpusManifest& manifest, const LanguageTable& languages);

} // namespace tmlpred::corpus
