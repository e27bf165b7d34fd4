// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/corpus.hpp>
#include <tmlpred/error.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <fmt/format.h>

namespace tmlpred
{

namespace
{
struct TaskNames
{
    Task task;
    std::string_view id;
    std::string_view display;
};

constexpr std::array<TaskNames, 6> task_names {{
    {Task::CodeGeneration, "code_generation", "Code Generation"},
    {Task::MathematicalReasoning, "mathematical_reasoning", "Mathematical Reasoning"},
    {Task::QaVqa, "qa_vqa", "QA VQA"},
    {Task::ClassificationNli, "classification_nli", "Classification NLI"},
    {Task::TextSummarization, "text_summarization", "Text Summarization"},
    {Task::MachineTranslation, "machine_translation", "Machine Translation"},
}};

constexpr std::array<std::string_view, 24> programming_languages {
    "python", "java", "javascript", "typescript", "c", "c++", "cpp", "c#", "csharp", "go", "golang", "rust",
    "ruby", "php", "kotlin", "swift", "scala", "perl", "lua", "r", "julia", "haskell", "bash", "shell",
};
} // namespace

std::string_view task_id(Task task) noexcept
{
    for (auto const& t: task_names)
        if (t.task == task)
            return t.id;
    return "unknown";
}

std::string_view task_display_name(Task task) noexcept
{
    for (auto const& t: task_names)
        if (t.task == task)
            return t.display;
    return "Unknown";
}

std::optional<Task> parse_task(std::string_view name)
{
    auto const folded = text::fold(name);
    for (auto const& t: task_names)
    {
        if (folded == t.id || folded == text::to_lower(t.display))
            return t.task;
    }
    // "Classification/NLI", "QA/VQA" and similar punctuation variants.
    auto const tokens = text::join(text::tokenize(name), "_");
    for (auto const& t: task_names)
    {
        if (tokens == t.id || tokens == text::join(text::tokenize(t.display), "_"))
            return t.task;
    }
    return std::nullopt;
}

Task task_from_string(std::string_view name)
{
    if (auto task = parse_task(name))
        return *task;
    throw InputError(fmt::format("unknown task '{}'", name));
}

bool is_programming_language(std::string_view name)
{
    auto const folded = text::fold(name);
    return std::find(programming_languages.begin(), programming_languages.end(), folded)
           != programming_languages.end();
}

std::string_view to_string(QueryType type) noexcept
{
    return type == QueryType::NumericPrediction ? "numeric" : "comparative";
}

QueryType query_type_from_string(std::string_view name)
{
    auto const folded = text::fold(name);
    if (folded == "numeric" || folded == "predictive" || folded == "predset" || folded == "numeric_prediction")
        return QueryType::NumericPrediction;
    if (folded == "comparative" || folded == "qna" || folded == "qnaset" || folded == "comparative_reasoning")
        return QueryType::ComparativeReasoning;
    throw InputError(fmt::format("unknown query type '{}'", name));
}

} // namespace tmlpred

namespace tmlpred::corpus
{

std::size_t ModelFamilyMapping::record_count() const
{
    std::size_t count = 0;
    for (auto const& [language, families]: entries)
        for (auto const& [family, records]: families)
            count += records.size();
    return count;
}

std::set<std::string> ModelFamilyMapping::papers() const
{
    std::set<std::string> ids;
    for (auto const& [language, families]: entries)
        for (auto const& [family, records]: families)
            for (auto const& r: records)
                ids.insert(r.paper_id);
    return ids;
}

bool ModelFamilyMapping::operator==(const ModelFamilyMapping& other) const
{
    if (task != other.task || entries.size() != other.entries.size())
        return false;
    // Keys compare case-insensitively, matching lookup semantics.
    auto a = entries.begin();
    auto b = other.entries.begin();
    for (; a != entries.end(); ++a, ++b)
    {
        if (!text::iequals(a->first, b->first) || a->second.size() != b->second.size())
            return false;
        auto fa = a->second.begin();
        auto fb = b->second.begin();
        for (; fa != a->second.end(); ++fa, ++fb)
        {
            if (!text::iequals(fa->first, fb->first) || fa->second != fb->second)
                return false;
        }
    }
    return true;
}

LanguageTable LanguageTable::from_json(const Json& doc)
{
    if (!doc.is_object())
        throw InputError("language table must be a JSON object");
    LanguageTable table;
    for (auto const& [code, names]: doc.items())
    {
        auto const canonical = text::fold(code);
        table.aliases_.add(code, canonical);
        if (!names.is_array())
            throw InputError(fmt::format("language '{}': expected an array of names", code));
        for (auto const& name: names)
            table.aliases_.add(name.get<std::string>(), canonical);
        if (!names.empty())
            table.display_[canonical] = names.front().get<std::string>();
    }
    return table;
}

LanguageTable LanguageTable::load(const std::string& path)
{
    return from_json(text::read_json_file(path));
}

std::string LanguageTable::canonical(std::string_view name) const
{
    return text::fold(aliases_.resolve(name));
}

std::string LanguageTable::display(std::string_view code) const
{
    if (auto it = display_.find(text::fold(code)); it != display_.end())
        return it->second;
    return std::string(code);
}

ModelFamilyMapping parse_mapping(const Json& doc, const LanguageTable& languages)
{
    if (!doc.is_object() || !doc.contains("task") || !doc.contains("entries"))
        throw InputError("mapping must be an object with 'task' and 'entries'");
    if (!doc["entries"].is_object())
        throw InputError("mapping 'entries' must be an object");

    ModelFamilyMapping mapping;
    mapping.task = task_from_string(doc["task"].get<std::string>());

    for (auto const& [raw_language, families]: doc["entries"].items())
    {
        if (text::trim(raw_language).empty())
            throw InputError("empty language key in mapping");
        if (mapping.task == Task::CodeGeneration && is_programming_language(raw_language))
            throw InputError(fmt::format("programming language '{}' used as a language key for code generation",
                                         raw_language));
        if (!families.is_object())
            throw InputError(fmt::format("language '{}': expected an object of model families", raw_language));

        auto const language = languages.canonical(raw_language);
        auto& family_map = mapping.entries[language];
        for (auto const& [raw_family, records]: families.items())
        {
            auto const family = text::trim(raw_family);
            if (family.empty())
                throw InputError(fmt::format("language '{}': empty model family key", raw_language));
            if (!records.is_array() || records.empty())
                throw InputError(fmt::format("{} / {}: record list must be a nonempty array", raw_language, family));

            auto& list = family_map[family];
            for (auto const& r: records)
            {
                if (!r.is_object() || !r.contains("metric") || !r.contains("value") || !r.contains("paper_id"))
                    throw InputError(fmt::format("{} / {}: record needs metric, value, paper_id", raw_language,
                                                 family));
                if (!r["value"].is_number())
                    throw InputError(fmt::format("{} / {}: value must be a number", raw_language, family));
                MetricRecord record {
                    .metric_name = text::trim(r["metric"].get<std::string>()),
                    .raw_value = r["value"].get<double>(),
                    .paper_id = text::trim(r["paper_id"].get<std::string>()),
                };
                if (record.metric_name.empty() || record.paper_id.empty() || !std::isfinite(record.raw_value))
                    throw InputError(fmt::format("{} / {}: invalid record", raw_language, family));
                list.push_back(std::move(record));
            }
            std::sort(list.begin(), list.end());
            list.erase(std::unique(list.begin(), list.end()), list.end());
        }
    }
    if (mapping.record_count() == 0)
        throw InputError("empty mapping");
    return mapping;
}

ModelFamilyMapping load_mapping(const std::string& path, const LanguageTable& languages)
{
    auto const content = text::read_file(path);
    if (text::trim(content).empty())
        throw InputError(fmt::format("{}: empty mapping", path));
    Json doc;
    try
    {
        doc = Json::parse(content);
    }
    catch (const Json::parse_error& e)
    {
        throw InputError(fmt::format("{}: {}", path, e.what()));
    }
    try
    {
        return parse_mapping(doc, languages);
    }
    catch (const InputError& e)
    {
        throw InputError(fmt::format("{}: {}", path, e.what()));
    }
}

Json to_json(const ModelFamilyMapping& mapping)
{
    Json entries = Json::object();
    for (auto const& [language, families]: mapping.entries)
    {
        Json fams = Json::object();
        for (auto const& [family, records]: families)
        {
            Json list = Json::array();
            for (auto const& r: records)
                list.push_back({{"metric", r.metric_name}, {"value", r.raw_value}, {"paper_id", r.paper_id}});
            fams[family] = std::move(list);
        }
        entries[language] = std::move(fams);
    }
    return {{"task", std::string(task_id(mapping.task))}, {"entries", std::move(entries)}};
}

EvidenceCorpus EvidenceCorpus::reduce(TaskMappings combined,
                                      std::set<std::string> removed,
                                      const InstantiabilityCheck& check,
                                      std::vector<std::string> paper_order)
{
    std::set<std::string> known;
    for (auto const& [task, mapping]: combined)
    {
        auto const papers = mapping.papers();
        known.insert(papers.begin(), papers.end());
    }
    for (auto const& id: removed)
    {
        if (!known.contains(id))
            throw InputError(fmt::format("removed paper '{}' does not occur in the combined corpus", id));
    }

    EvidenceCorpus corpus;
    for (auto const& [task, mapping]: combined)
    {
        ModelFamilyMapping reduced {.task = task, .entries = {}};
        for (auto const& [language, families]: mapping.entries)
        {
            FamilyRecords kept_families;
            for (auto const& [family, records]: families)
            {
                std::vector<MetricRecord> kept;
                std::copy_if(records.begin(), records.end(), std::back_inserter(kept),
                             [&](const MetricRecord& r) { return !removed.contains(r.paper_id); });
                if (!kept.empty())
                    kept_families.emplace(family, std::move(kept));
            }
            if (!kept_families.empty())
                reduced.entries.emplace(language, std::move(kept_families));
        }
        corpus.reduced_.emplace(task, std::move(reduced));
    }
    corpus.combined_ = std::move(combined);
    corpus.removed_ = std::move(removed);
    for (std::size_t i = 0; i < paper_order.size(); ++i)
        corpus.order_.emplace(paper_order[i], static_cast<long>(i));

    if (check)
    {
        auto const problems = check(corpus);
        if (!problems.empty())
        {
            throw InvariantError(fmt::format("reduced corpus leaves scenarios uninstantiable: {}",
                                             text::join(problems, "; ")));
        }
    }
    return corpus;
}

long EvidenceCorpus::paper_rank(std::string_view paper_id) const
{
    if (auto it = order_.find(paper_id); it != order_.end())
        return it->second;
    return -1;
}

Json EvidenceCorpus::to_json() const
{
    Json combined = Json::array();
    Json reduced = Json::array();
    for (auto const& [task, mapping]: combined_)
        combined.push_back(corpus::to_json(mapping));
    for (auto const& [task, mapping]: reduced_)
        reduced.push_back(corpus::to_json(mapping));
    Json order = Json::array();
    std::vector<std::pair<long, std::string>> ranked;
    for (auto const& [id, rank]: order_)
        ranked.emplace_back(rank, id);
    std::sort(ranked.begin(), ranked.end());
    for (auto const& [rank, id]: ranked)
        order.push_back(id);
    return {{"combined", combined}, {"reduced", reduced}, {"removed_papers", removed_}, {"paper_order", order}};
}

CorpusView::CorpusView(std::shared_ptr<const EvidenceCorpus> corpus, ViewRole role):
    corpus_(std::move(corpus)), role_(role)
{
    if (!corpus_)
        throw InputError("corpus view requires a corpus");
}

const TaskMappings& CorpusView::side() const noexcept
{
    return role_ == ViewRole::Combined ? corpus_->combined() : corpus_->reduced();
}

const ModelFamilyMapping* CorpusView::mapping(Task task) const
{
    auto const& mappings = side();
    auto it = mappings.find(task);
    return it == mappings.end() ? nullptr : &it->second;
}

std::vector<MetricRecord> CorpusView::lookup(Task task, std::string_view language, std::string_view family) const
{
    auto const* m = mapping(task);
    if (!m)
        return {};
    auto lang = m->entries.find(text::trim(language));
    if (lang == m->entries.end())
        return {};
    auto fam = lang->second.find(text::trim(family));
    if (fam == lang->second.end())
        return {};
    if (role_ == ViewRole::Combined)
        return fam->second;

    std::vector<MetricRecord> out;
    auto const& removed = corpus_->removed_papers();
    std::copy_if(fam->second.begin(), fam->second.end(), std::back_inserter(out),
                 [&](const MetricRecord& r) { return !removed.contains(r.paper_id); });
    return out;
}

bool CorpusView::language_observed(Task task, std::string_view language) const
{
    auto const* m = mapping(task);
    return m && m->entries.contains(text::trim(language));
}

bool CorpusView::family_observed(Task task, std::string_view family) const
{
    auto const* m = mapping(task);
    if (!m)
        return false;
    auto const key = text::trim(family);
    return std::any_of(m->entries.begin(), m->entries.end(),
                       [&](auto const& entry) { return entry.second.contains(key); });
}

bool CorpusView::pair_observed(Task task, std::string_view language, std::string_view family) const
{
    return !lookup(task, language, family).empty();
}

std::vector<std::string> CorpusView::languages_for_family(Task task, std::string_view family) const
{
    std::vector<std::string> out;
    auto const* m = mapping(task);
    if (!m)
        return out;
    auto const key = text::trim(family);
    for (auto const& [language, families]: m->entries)
        if (families.contains(key))
            out.push_back(language);
    return out;
}

CorpusManifest CorpusManifest::load(const std::string& path)
{
    auto const doc = text::read_json_file(path);
    auto const base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        auto fp = std::filesystem::path(p);
        return (fp.is_absolute() ? fp : base / fp).lexically_normal().string();
    };

    CorpusManifest manifest;
    if (!doc.contains("mappings") || !doc["mappings"].is_array() || doc["mappings"].empty())
        throw InputError(fmt::format("{}: manifest needs a nonempty 'mappings' array", path));
    for (auto const& p: doc["mappings"])
        manifest.mapping_paths.push_back(resolve(p.get<std::string>()));
    for (auto const& id: doc.value("removed_papers", Json::array()))
        manifest.removed_papers.insert(id.get<std::string>());
    for (auto const& id: doc.value("paper_order", Json::array()))
        manifest.paper_order.push_back(id.get<std::string>());
    if (doc.contains("languages"))
        manifest.languages_path = resolve(doc["languages"].get<std::string>());
    return manifest;
}

TaskMappings load_mappings(const CorpusManifest& manifest, const LanguageTable& languages)
{
    TaskMappings mappings;
    for (auto const& path: manifest.mapping_paths)
    {
        auto mapping = load_mapping(path, languages);
        auto const task = mapping.task;
        if (!mappings.emplace(task, std::move(mapping)).second)
            throw InputError(fmt::format("{}: second mapping for task '{}'", path, task_id(task)));
    }
    return mappings;
}

} // namespace tmlpred::corpus
