/** Glue between the API client and the view model: the operator actions
 * and the stream-event handling, kept DOM-free.
 */

import { Api, describeError } from "./api.js";
import type { HistoryQuery } from "./api.js";
import { AppModel } from "./model.js";
import type { ServerEvent } from "./types.js";
import type { Actions } from "./views.js";

export interface Controller {
  actions: Actions;
  handleEvent(event: ServerEvent): void;
  loadInitial(): Promise<void>;
}

export function makeController(api: Api, model: AppModel): Controller {
  const fail = (err: unknown): void => model.pushNotice("error", describeError(err));

  // pages are ascending slices, so "no offset" means the newest page:
  // read the total, then re-fetch the tail when the set is bigger than one page
  const loadHistory = async (query: HistoryQuery): Promise<void> => {
    try {
      let page = await api.getHistory(query);
      if (query.offset === undefined && page.total > page.offset + page.records.length) {
        page = await api.getHistory({
          ...query,
          offset: Math.max(0, page.total - page.limit),
        });
      }
      model.setHistory(page);
    } catch (err) {
      fail(err);
    }
  };

  const refreshModels = (): Promise<void> =>
    api
      .getModels()
      .then(({ models }) => model.setModels(models))
      .catch(fail);

  const refreshLabelCounts = (): Promise<void> =>
    api
      .getLabels()
      .then((doc) => model.setLabelCounts(doc.class_counts))
      .catch(fail);

  const actions: Actions = {
    label(recordId, label) {
      // optimistic: drop from the queue now, put it back if the POST fails
      const rollback = model.takeFromQueue(recordId);
      api
        .labelRecord(recordId, label)
        .then(() => refreshLabelCounts())
        .catch((err) => {
          rollback();
          fail(err);
        });
    },
    train(overrides) {
      api
        .train(overrides)
        .then((status) => model.setTraining(status))
        .catch(fail);
    },
    activate(modelId) {
      api
        .activateModel(modelId)
        .then(() => refreshModels())
        .catch(fail);
    },
    loadHistory(query) {
      void loadHistory(query);
    },
    dismissNotice(index) {
      model.dismissNotice(index);
    },
  };

  return {
    actions,
    handleEvent(event) {
      model.applyEvent(event);
      // a finished training run changes the model list
      if (event.type === "training" && event.doc.state !== "running") {
        void refreshModels();
      }
    },
    async loadInitial() {
      await Promise.all([
        api.getConfig().then((cfg) => model.setConfig(cfg)).catch(fail),
        api
          .getState()
          .then(({ streams }) => model.setStateSnapshot(streams))
          .catch(fail),
        api.trainStatus().then((status) => model.setTraining(status)).catch(fail),
        refreshModels(),
        refreshLabelCounts(),
        loadHistory({ limit: 50 }),
      ]);
    },
  };
}
