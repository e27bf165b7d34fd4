// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/conversation_store.hpp>
#include <tmlpred/error.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <fstream>

namespace tmlpred::orch
{

Conversation::Conversation(Sink sink): sink_(std::move(sink)) {}

std::unique_ptr<Conversation> Conversation::from_events(std::vector<Event> events, Sink sink)
{
    auto conv = std::make_unique<Conversation>(std::move(sink));
    for (auto const& e: events)
        conv->dag_.apply(e);
    conv->events_ = std::move(events);
    return conv;
}

Event Conversation::emit(std::string_view type, Json data)
{
    Event event;
    {
        std::scoped_lock lock(mutex_);
        event = Event {dag_.last_seq() + 1, std::string(type), std::move(data)};
        dag_.apply(event);
        events_.push_back(event);
        if (sink_)
            sink_(event);
    }
    changed_.notify_all();
    return event;
}

Json Conversation::snapshot() const
{
    std::scoped_lock lock(mutex_);
    return dag_.snapshot();
}

Json Conversation::snapshot_at(std::uint64_t seq) const
{
    std::scoped_lock lock(mutex_);
    if (seq > events_.size())
        throw NotFoundError(fmt::format("cursor {} is beyond the last event {}", seq, events_.size()));
    Dag dag;
    for (std::size_t i = 0; i < seq; ++i)
        dag.apply(events_[i]);
    return dag.snapshot();
}

std::vector<Event> Conversation::events() const
{
    std::scoped_lock lock(mutex_);
    return events_;
}

std::uint64_t Conversation::last_seq() const
{
    std::scoped_lock lock(mutex_);
    return dag_.last_seq();
}

std::vector<Event> Conversation::events_since(std::uint64_t cursor,
                                              std::size_t limit,
                                              std::chrono::milliseconds timeout) const
{
    std::unique_lock lock(mutex_);
    if (timeout.count() > 0)
        changed_.wait_for(lock, timeout, [&] { return events_.size() > cursor; });
    std::vector<Event> out;
    for (auto i = static_cast<std::size_t>(cursor); i < events_.size() && out.size() < limit; ++i)
        out.push_back(events_[i]);
    return out;
}

bool Conversation::try_begin_turn()
{
    bool expected = false;
    return busy_.compare_exchange_strong(expected, true);
}

void Conversation::end_turn()
{
    busy_.store(false);
    changed_.notify_all();
}

ConversationStore::ConversationStore(std::optional<std::filesystem::path> dir): dir_(std::move(dir))
{
    if (dir_)
        std::filesystem::create_directories(*dir_);
}

Conversation::Sink ConversationStore::sink_for(const std::string& id) const
{
    if (!dir_)
        return {};
    auto path = *dir_ / (id + ".jsonl");
    return [path](const Event& e) {
        std::ofstream out(path, std::ios::app | std::ios::binary);
        if (!out)
            throw InputError(fmt::format("cannot append to event log {}", path.string()));
        out << text::canonical_dump(e.to_json()) << '\n';
        out.flush();
    };
}

std::pair<std::string, std::shared_ptr<Conversation>> ConversationStore::create(std::optional<std::string> id)
{
    std::scoped_lock lock(mutex_);
    std::string key;
    if (id)
    {
        key = *id;
        if (key.empty() || key.find_first_of("/\\.") != std::string::npos)
            throw InputError(fmt::format("invalid conversation id '{}'", key));
        if (conversations_.contains(key))
            throw ConflictError(fmt::format("conversation {} already exists", key));
    }
    else
    {
        do
            key = fmt::format("c{:06}", ++counter_);
        while (conversations_.contains(key));
    }
    auto conv = std::make_shared<Conversation>(sink_for(key));
    conversations_.emplace(key, conv);
    return {key, conv};
}

std::shared_ptr<Conversation> ConversationStore::get(std::string_view id) const
{
    std::scoped_lock lock(mutex_);
    auto it = conversations_.find(id);
    if (it == conversations_.end())
        throw NotFoundError(fmt::format("unknown conversation '{}'", id));
    return it->second;
}

bool ConversationStore::contains(std::string_view id) const
{
    std::scoped_lock lock(mutex_);
    return conversations_.find(id) != conversations_.end();
}

std::vector<std::string> ConversationStore::ids() const
{
    std::scoped_lock lock(mutex_);
    std::vector<std::string> out;
    for (auto const& [id, _]: conversations_)
        out.push_back(id);
    return out;
}

std::size_t ConversationStore::recover()
{
    if (!dir_)
        return 0;
    std::vector<std::filesystem::path> logs;
    for (auto const& entry: std::filesystem::directory_iterator(*dir_))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            logs.push_back(entry.path());
    std::sort(logs.begin(), logs.end());

    std::size_t loaded = 0;
    for (auto const& path: logs)
    {
        auto const id = path.stem().string();
        std::vector<Event> events;
        for (auto const& line: text::read_jsonl_file(path.string()))
            events.push_back(Event::from_json(line));
        auto conv = std::shared_ptr<Conversation>(Conversation::from_events(std::move(events), sink_for(id)));
        auto const& dag = conv->dag();
        if (dag.turn_open())
        {
            std::vector<std::string> active;
            for (auto const& n: dag.nodes())
                if (n.state == NodeState::Active)
                    active.push_back(n.node_id);
            for (auto const& node_id: active)
                conv->emit(ev::annotated, {{"node_id", node_id}, {"note", "interrupted by restart; pending resumption"}});
        }
        {
            std::scoped_lock lock(mutex_);
            conversations_[id] = std::move(conv);
            if (id.size() == 7 && id[0] == 'c')
                if (auto n = text::parse_number(id.substr(1)))
                    counter_ = std::max(counter_, static_cast<std::uint64_t>(*n));
        }
        ++loaded;
    }
    return loaded;
}

} // namespace tmlpred::orch
